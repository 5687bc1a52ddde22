import json
import math

from pathlib import Path

import numpy as np
import pandas as pd

from neutron_transport.estimators import OccupationHistogram

HEATMAP_COLUMNS = ['bin_x', 'bin_y', 'sector', 'value']


def _ensure_parent(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    '''
    CSV with a header row, '.' decimals and '\\n' line endings.
    '''
    path = _ensure_parent(path)
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f'{type(value).__name__} is not JSON serialisable')


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _finite_or_none(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(item) for item in value]
    return value


def write_json(data: dict | list, path: str | Path) -> Path:
    path = _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as file:
        json.dump(_finite_or_none(data), file, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
        file.write('\n')
    return path


def heatmap_frame(values: np.ndarray) -> pd.DataFrame:
    '''
    One row per bin of a (nx, ny, n_sectors) array.
    '''
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return pd.DataFrame(columns=HEATMAP_COLUMNS)
    nx, ny, n_sectors = values.shape
    ix, iy, sector = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(n_sectors), indexing='ij')
    return pd.DataFrame({'bin_x': ix.ravel(), 'bin_y': iy.ravel(), 'sector': sector.ravel(),
                         'value': values.ravel()}, columns=HEATMAP_COLUMNS)


def emit_heatmap(histogram: OccupationHistogram | None, path: str | Path) -> Path:
    '''
    Writes bin_x, bin_y, sector, value; an empty run gives the header only.
    '''
    frame = heatmap_frame(np.zeros((0, 0, 0)) if histogram is None else histogram.values)
    return write_frame(frame, path)


def region_means(histogram: OccupationHistogram) -> pd.DataFrame:
    '''
    Mean bin value per material region, using the region of each bin center.
    '''
    x_centers, y_centers = histogram.bins.centers()
    domain = histogram.bins.domain
    frame = heatmap_frame(histogram.values)
    positions = [np.array([x_centers[i]]) if domain.dim == 1 else np.array([x_centers[i], y_centers[j]])
                 for i, j in zip(frame['bin_x'], frame['bin_y'])]
    frame['region'] = [domain.region_index(r) for r in positions]
    return frame.groupby('region', as_index=False)['value'].mean()


def convergence_table(sweep: pd.DataFrame, lambda_star: float) -> pd.DataFrame:
    '''
    Mean squared error of lambda_hat per (t, k) over the seeds of a sweep,
    with the log-log coordinates of the convergence plot.
    '''
    defined = sweep.dropna(subset=['lambda_hat']).copy()
    defined['squared_error'] = (defined['lambda_hat'].astype(float) - lambda_star) ** 2
    table = defined.groupby(['t', 'k'], as_index=False).agg(
        mean_squared_error=('squared_error', 'mean'), runs=('squared_error', 'size'))
    table['log_t'] = np.log(table['t'])
    with np.errstate(divide='ignore'):
        table['log_mean_squared_error'] = np.log(table['mean_squared_error'])
    return table
