"""
Export Render Experiments to a Shareable Report
Creates a standalone HTML page with convergence plots, the per-region
step sizes of a partition dump and the variant-study table
"""

import os
from datetime import datetime
from typing import Dict, Optional

import pandas as pd
import plotly.graph_objects as go

PARTITION_COLUMNS = ['region_id', 'u0', 'v0', 'u1', 'v1', 'lambda', 'n_k', 'visits']

COLORS = {'fixed': '#dc3545', 'global': '#ffc107', 'ra-grid': '#667eea', 'ra-quadtree': '#28a745'}

STYLE = """
        body {
            font-family: 'Segoe UI', Tahoma, Geneva, Verdana, sans-serif;
            max-width: 1200px;
            margin: 0 auto;
            padding: 20px;
            background: #f0f2f6;
            color: #333;
        }
        .container {
            background: white;
            padding: 30px;
            border-radius: 10px;
            box-shadow: 0 4px 6px rgba(0,0,0,0.1);
        }
        h1 {
            color: #667eea;
            border-bottom: 3px solid #667eea;
            padding-bottom: 10px;
        }
        h2 { color: #764ba2; margin-top: 30px; }
        table { width: 100%; border-collapse: collapse; margin: 20px 0; }
        th { background: #667eea; color: white; padding: 12px; text-align: left; }
        td { padding: 10px; border-bottom: 1px solid #ddd; }
        .good { color: #28a745; font-weight: bold; }
        .bad { color: #dc3545; font-weight: bold; }
"""


def read_partition_dump(path: str) -> pd.DataFrame:
    """`leaf <id> <u0> <v0> <u1> <v1> <lambda> <n_k> <visits>` lines as a frame"""
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] != 'leaf' or len(tokens) != 9:
                raise ValueError(f"{path}:{number}: not a partition dump line")
            rows.append([tokens[1]] + [float(t) for t in tokens[2:7]] + [int(tokens[7]), int(tokens[8])])
    return pd.DataFrame(rows, columns=PARTITION_COLUMNS)


def convergence_figure(metrics: Dict[str, pd.DataFrame]) -> go.Figure:
    fig = go.Figure()
    for label, frame in metrics.items():
        fig.add_trace(go.Scatter(
            x=frame['time_s'],
            y=frame['rrmse'],
            mode='lines+markers',
            name=label,
            line=dict(color=COLORS.get(label.split()[0]), width=3),
            marker=dict(size=6)
        ))
    fig.update_layout(
        title="rRMSE vs render time",
        xaxis_title="Time (s)",
        yaxis_title="rRMSE",
        xaxis_type='log',
        yaxis_type='log',
        hovermode='x unified',
        height=450,
        showlegend=True
    )
    return fig


def step_size_figures(partition: pd.DataFrame):
    """Histogram of lambda over visited leaves and a map of leaf centres coloured by lambda"""
    visited = partition[partition['visits'] > 0]
    histogram = go.Figure(go.Histogram(x=visited['lambda'], nbinsx=40, marker=dict(color='#667eea')))
    histogram.update_layout(title="Per-region lambda", xaxis_title="lambda", yaxis_title="Regions", height=350)

    centres = go.Figure(go.Scatter(
        x=0.5 * (visited['u0'] + visited['u1']),
        y=0.5 * (visited['v0'] + visited['v1']),
        mode='markers',
        marker=dict(color=visited['lambda'], colorscale='Viridis', showscale=True,
                    size=6, colorbar=dict(title="lambda")),
        text=visited['region_id']
    ))
    centres.update_layout(title="Region lambda over the canonical square", xaxis_title="u", yaxis_title="v",
                          xaxis_range=[0, 1], yaxis_range=[0, 1], height=500)
    return histogram, centres


def _study_table(study: pd.DataFrame, ordering: Optional[bool]) -> str:
    medians = study.groupby('strategy')[['rrmse', 'mean_acceptance', 'seconds']].median().sort_values('rrmse')
    html = """
        <h2>Variant study (median over seeds)</h2>
        <table>
            <thead>
                <tr><th>Strategy</th><th>rRMSE</th><th>Mean acceptance</th><th>Seconds</th></tr>
            </thead>
            <tbody>
"""
    for strategy, row in medians.iterrows():
        html += (f"                <tr><td><strong>{strategy}</strong></td><td>{row['rrmse']:.4f}</td>"
                 f"<td>{row['mean_acceptance']:.3f}</td><td>{row['seconds']:.1f}</td></tr>\n")
    html += """            </tbody>
        </table>
"""
    if ordering is not None:
        css, text = ('good', 'Expected ordering holds') if ordering else ('bad', 'Expected ordering does not hold')
        html += f'        <p class="{css}">{text}</p>\n'
    return html


def create_html_report(output_path: str, metrics: Optional[Dict[str, pd.DataFrame]] = None,
                       study: Optional[pd.DataFrame] = None, partition: Optional[pd.DataFrame] = None,
                       ordering: Optional[bool] = None, title: str = "MLT render report") -> str:
    """Write the report and return its path"""
    figures = []
    if metrics:
        figures.append(convergence_figure(metrics))
    if partition is not None and not partition.empty:
        figures.extend(step_size_figures(partition))

    sections = []
    for i, fig in enumerate(figures):
        sections.append(fig.to_html(full_html=False, include_plotlyjs=(i == 0)))

    html = f"""<!DOCTYPE html>
<html>
<head>
    <meta charset="UTF-8">
    <title>{title}</title>
    <style>{STYLE}    </style>
</head>
<body>
    <div class="container">
        <h1>{title}</h1>
        <p>Generated: {datetime.now().strftime('%B %d, %Y at %I:%M %p')}</p>
"""
    for section in sections:
        html += f"        <div>{section}</div>\n"
    if study is not None and not study.empty:
        html += _study_table(study, ordering)
    html += """    </div>
</body>
</html>
"""

    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        f.write(html)
    return output_path
