#
# dataplot.py
#

import plotly.graph_objects as go

RESULT_COLOURS = {"holds": "#2ca02c", "violated": "#d62728", "inapplicable": "#7f7f7f"}


class DataPlotter:

    def __init__(self, title=""):
        self.title = title
        self.y_data = {}
        self.y_label = {}
        self.x_data = []
        self.x_label = "x"

    def set_x(self, label):
        self.x_label = label

    def append_x(self, value):
        self.x_data.append(value)

    def add_y(self, varname, varlabel):
        self.y_data[varname] = []
        self.y_label[varname] = varlabel

    def append_y(self, varname, value):
        self.y_data[varname].append(value)

    def figure(self):
        """
        Stacked bar chart, one trace per y variable
        """
        fig = go.Figure()
        for varname, label in self.y_label.items():
            fig.add_trace(go.Bar(x=self.x_data, y=self.y_data[varname], name=label,
                                 marker_color=RESULT_COLOURS.get(varname)))
        fig.update_layout(barmode="stack", title=self.title, xaxis_title=self.x_label)
        return fig

    def write_html(self, path):
        self.figure().write_html(path, include_plotlyjs="cdn")


def verdict_plotter(summary):
    """
    Builds a plotter of verdict counts per property from an exploration summary
    :param summary: dict as written to summary.json
    """
    dp = DataPlotter(f"{summary['scenario']} ({summary['schedules']} schedules)")
    dp.set_x("property")
    for result in RESULT_COLOURS:
        dp.add_y(result, result)
    for prop, counts in sorted(summary["properties"].items()):
        dp.append_x(prop)
        for result in RESULT_COLOURS:
            dp.append_y(result, counts.get(result, 0))
    return dp
