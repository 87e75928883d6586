"""Columnar result files, orbit catalogs and optional raster images"""

import csv
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import matplotlib
import numpy as np

from dickescar.config import get_settings
from dickescar.errors import ConfigError
from dickescar.models import HusimiGrid, OccupationCurve, OrbitCatalog, ScarMeasurement
from dickescar.models.run_config import FORMAT_VERSION
from dickescar.services.orbits import sample_orbit

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)
settings = get_settings()

COLORMAP = "inferno"
CATALOG_COLUMNS = ['id', 'eps', 'T', 'lambda', 'T_lambda', 'q', 'p', 'Q', 'P', 'closure_residual', 'state']
SCAR_CATALOG_COLUMNS = ['P_k', 'P_k_err']
SCAR_COLUMNS = ['state', 'orbit', 'eps', 'lambda', 'T_lambda', 'P_k', 'error', 'numerator', 'denominator', 'note']


def safe_name(label: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.+-]', '_', label) or "unnamed"


class OutputService:
    """Writes every file with the same `#` header: format version, config hash, columns"""

    def __init__(self, out_dir: str, config_hash: str, images: bool = False):
        self.root = Path(out_dir).expanduser()
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.images = images

    def header(self, columns: Sequence[str], comments: Iterable[str] = ()) -> List[str]:
        return [
            f"{settings.SERVICE_NAME} format_version={FORMAT_VERSION}",
            f"config_hash={self.config_hash}",
            *comments,
            "columns: " + " ".join(columns),
        ]

    def write_table(self, relpath: str, columns: Sequence[str], rows: np.ndarray,
                    comments: Iterable[str] = (), fmt: str = '%.12g') -> Path:
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = np.asarray(rows, dtype=float).reshape(-1, len(columns))
        np.savetxt(path, rows, fmt=fmt, delimiter='\t',
                   header="\n".join(self.header(columns, comments)), comments='# ')
        logger.debug(f"Wrote {path}")
        return path

    def write_records(self, relpath: str, columns: Sequence[str], records: Iterable[Dict],
                      comments: Iterable[str] = (), digits: int = 12) -> Path:
        """Tab-separated rows that mix text and numbers"""
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as handle:
            for line in self.header(columns, comments):
                handle.write(f"# {line}\n")
            writer = csv.DictWriter(handle, fieldnames=list(columns), delimiter='\t',
                                    extrasaction='ignore', lineterminator='\n')
            writer.writeheader()
            for record in records:
                writer.writerow({k: _fmt(v, digits) for k, v in record.items()})
        logger.debug(f"Wrote {path}")
        return path

    def write_text(self, relpath: str, lines: Iterable[str]) -> Path:
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        body = [f"# {line}" for line in self.header(["text"])] + list(lines)
        path.write_text("\n".join(body) + "\n")
        return path

    def write_curve(self, curve: OccupationCurve, subdir: str = "occupations") -> Path:
        rows = np.column_stack([curve.alphas, curve.occupations, curve.occupation_errors,
                                curve.lambdas, curve.lambda_errors])
        return self.write_table(
            f"{subdir}/{safe_name(curve.label)}.txt",
            ['alpha', 'L_alpha', 'L_alpha_err', 'Lambda_alpha', 'Lambda_alpha_err'],
            rows,
            comments=[f"state={curve.label}", f"eps={curve.eps:.12g}",
                      *[f"{k}={v:.12g}" for k, v in curve.extra.items()]]
        )

    def write_grid(self, grid: HusimiGrid, subdir: str = "grids") -> Path:
        QQ, PP = np.meshgrid(grid.Q_axis, grid.P_axis)
        rows = np.column_stack([QQ.ravel(), PP.ravel(), grid.values.ravel(),
                                grid.unconverged.ravel().astype(float)])
        stem = f"{safe_name(grid.label)}_alpha{grid.alpha:g}"
        path = self.write_table(
            f"{subdir}/{stem}.txt", ['Q', 'P', 'value', 'unconverged'], rows,
            comments=[f"state={grid.label}", f"alpha={grid.alpha:g}", f"eps={grid.eps:.12g}",
                      f"n_theta={grid.n_nodes}", "value=nan marks cells outside the shell projection"]
        )
        if self.images:
            self.save_image(grid, self.root / subdir / f"{stem}.png")
        return path

    def save_image(self, grid: HusimiGrid, path: Path) -> Path:
        """Grid normalized to unit maximum, fixed colormap"""
        fig, ax = plt.subplots(figsize=(4, 4))
        try:
            image = np.ma.masked_invalid(grid.normalized())
            ax.pcolormesh(grid.Q_axis, grid.P_axis, image, cmap=COLORMAP, vmin=0.0, vmax=1.0,
                          shading='nearest')
            ax.set_xlabel("Q")
            ax.set_ylabel("P")
            ax.set_aspect('equal')
            ax.set_title(f"{grid.label}  alpha={grid.alpha:g}")
            fig.savefig(path, dpi=120, bbox_inches='tight')
        finally:
            plt.close(fig)
        return path

    def write_catalog(self, catalog: OrbitCatalog, n_points: int = 400,
                      scar: Optional[Dict[str, ScarMeasurement]] = None) -> Path:
        """catalog.tsv at full precision (rows are re-read by scar-measure) plus one sampled path per orbit"""
        columns = CATALOG_COLUMNS + (SCAR_CATALOG_COLUMNS if scar is not None else [])
        records = []
        for orbit in catalog.orbits:
            q, p, Q, P = orbit.x0.as_array()
            record = {
                'id': orbit.orbit_id, 'eps': orbit.energy, 'T': orbit.period,
                'lambda': orbit.lyapunov, 'T_lambda': orbit.t_lambda,
                'q': q, 'p': p, 'Q': Q, 'P': P,
                'closure_residual': orbit.closure_residual, 'state': orbit.label
            }
            if scar is not None and orbit.orbit_id in scar:
                record.update({'P_k': scar[orbit.orbit_id].value, 'P_k_err': scar[orbit.orbit_id].error})
            records.append(record)
            self.write_table(
                f"orbits/{safe_name(orbit.orbit_id)}.txt", ['t', 'q', 'p', 'Q', 'P'],
                np.column_stack([orbit.period * np.arange(n_points) / n_points,
                                 sample_orbit(orbit, n_points)]),
                comments=[f"orbit={orbit.orbit_id}", f"T={orbit.period:.12g}"]
            )
        return self.write_records("orbits/catalog.tsv", columns, records, digits=17)

    def read_catalog(self, path: Optional[Path] = None) -> List[Dict[str, str]]:
        path = Path(path) if path else self.root / "orbits" / "catalog.tsv"
        if not path.is_file():
            raise ConfigError(f"Orbit catalog not found at {path}; run orbit-hunt first")
        with open(path, newline='') as handle:
            lines = [line for line in handle if not line.startswith('#')]
        return list(csv.DictReader(lines, delimiter='\t'))

    def write_scar_table(self, measurements: Sequence[ScarMeasurement]) -> Path:
        records = [{
            'state': m.state_label, 'orbit': m.orbit_id, 'eps': m.eps, 'lambda': m.lyapunov,
            'T_lambda': m.t_lambda, 'P_k': m.value, 'error': m.error,
            'numerator': m.numerator, 'denominator': m.denominator, 'note': m.note or ''
        } for m in measurements]
        return self.write_records("scar_measure.txt", SCAR_COLUMNS, records)


def _fmt(value, digits: int = 12) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{digits}g}"
    return str(value)
