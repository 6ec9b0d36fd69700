import plotly
import plotly.graph_objs as go

from simpc.geometry import asPoints


def _title(text, fontSize):
    return {
        'text': text,
        'font': {
            'size': fontSize,
        },
    }


def _axis(title, axisFontSize):
    return {
        'title': _title(title, axisFontSize),
    }


def plotTrainingLoss(logs, outfile, title='Training loss', titleFontSize=18,
                     axisFontSize=16, show=False):
    """
    Plot the per-epoch loss breakdown of a training run.

    @param logs: A C{list} of C{EpochLog} instances.
    @param outfile: The C{str} HTML file to write.
    @param title: The C{str} plot title.
    @param show: If C{True}, open the plot in a browser.
    """
    epochs = [log.epoch for log in logs]
    data = []
    for key in ('total', 'mpc', 'sr', 'baseline'):
        values = [log.losses[key] for log in logs]
        if any(values):
            data.append(go.Scatter(x=epochs, y=values, mode='lines+markers',
                                   name=key))

    evalEpochs = [log.epoch for log in logs if log.evalCD is not None]
    if evalEpochs:
        data.append(go.Scatter(
            x=evalEpochs,
            y=[log.evalCD for log in logs if log.evalCD is not None],
            mode='markers', name='held-out CD', yaxis='y2'))

    layout = go.Layout(
        title=_title(title, titleFontSize),
        xaxis=_axis('Epoch', axisFontSize),
        yaxis=_axis('Loss', axisFontSize),
        yaxis2={
            'title': 'Chamfer distance',
            'overlaying': 'y',
            'side': 'right',
        },
    )
    fig = go.Figure(data=data, layout=layout)
    plotly.offline.plot(fig, filename=outfile, auto_open=show, show_link=False)


def plotAblation(rows, outfile, metric='cd_e5', title='Ablation',
                 titleFontSize=18, axisFontSize=16, show=False):
    """
    Plot an ablation table as grouped bars, one group per noise level.

    @param rows: A C{list} of C{dict}s with 'setting', 'noise_scale' and
        metric keys, as made by the ablate command.
    @param outfile: The C{str} HTML file to write.
    @param metric: The C{str} row key to plot.
    @param show: If C{True}, open the plot in a browser.
    """
    settings = []
    for row in rows:
        if row['setting'] not in settings:
            settings.append(row['setting'])

    data = []
    for setting in settings:
        selected = [row for row in rows if row['setting'] == setting]
        data.append(go.Bar(
            x=['%g%%' % (100.0 * row['noise_scale']) for row in selected],
            y=[row[metric] for row in selected],
            name=setting))

    layout = go.Layout(
        title=_title(title, titleFontSize),
        barmode='group',
        xaxis=_axis('Noise level', axisFontSize),
        yaxis=_axis(metric, axisFontSize),
    )
    fig = go.Figure(data=data, layout=layout)
    plotly.offline.plot(fig, filename=outfile, auto_open=show, show_link=False)


def plotClouds(clouds, names, outfile, title='Point clouds', markerSize=2,
               titleFontSize=18, show=False):
    """
    Plot point clouds together in 3-D.

    @param clouds: A C{list} of C{PointCloud}s or N x 3 arrays.
    @param names: A C{list} of C{str} legend names, one per cloud.
    @param outfile: The C{str} HTML file to write.
    @param show: If C{True}, open the plot in a browser.
    """
    assert len(clouds) == len(names), (
        'Got %d clouds but %d names.' % (len(clouds), len(names)))
    data = []
    for cloud, name in zip(clouds, names):
        points = asPoints(cloud)
        data.append(go.Scatter3d(
            x=points[:, 0], y=points[:, 1], z=points[:, 2], mode='markers',
            marker={'size': markerSize}, name=name))

    layout = go.Layout(
        title=_title(title, titleFontSize),
        scene={'aspectmode': 'data'},
    )
    fig = go.Figure(data=data, layout=layout)
    plotly.offline.plot(fig, filename=outfile, auto_open=show, show_link=False)
