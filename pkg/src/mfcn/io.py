"""File formats: cloud CSV, binary matrices, network JSON, reports, manifests.

All float payloads round-trip bit-exactly: CSV cells use shortest
round-trip decimal repr, binary matrices store little-endian f64.

Matrix container layout (magic "MFCNMAT1"):
    8 bytes magic, u32 version (=1), u8 kind (0 dense / 1 sparse),
    u64 rows, u64 cols, then the payload --
    dense: rows*cols f64 row-major;
    sparse: u64 nnz, then nnz records of (u64 i, u64 j, f64 v) sorted by
    (i, j), with both symmetric halves present.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse

from .errors import ContractError
from .manifolds import DensitySpec, ManifoldSpec, PointCloud
from .graphs import GraphLaplacian
from .spectral import EigenSystem, FilterSpec
from .network import LayerSpec, NetworkSpec

MATRIX_MAGIC = b"MFCNMAT1"
FORMAT_VERSION = 1


# --------------------------------------------------------------------------
# Point cloud CSV
# --------------------------------------------------------------------------

def write_cloud_csv(path, cloud: PointCloud) -> None:
    path = Path(path)
    spec = cloud.spec
    header = (f"# mfcn-cloud v1, kind={spec.kind}, d={spec.intrinsic_dim}, "
              f"D={spec.ambient_dim}, seed={cloud.seed}, "
              f"density={spec.density.label()}")
    cols = [f"x{i}" for i in range(spec.ambient_dim)] + \
           [f"u{i}" for i in range(spec.intrinsic_dim)]
    with path.open("w", newline="") as fh:
        fh.write(header + "\n")
        fh.write(",".join(cols) + "\n")
        for amb, intr in zip(cloud.points, cloud.intrinsic_coords):
            fh.write(",".join(repr(float(v)) for v in (*amb, *intr)) + "\n")


def _parse_density(label: str) -> DensitySpec:
    if label == "uniform":
        return DensitySpec()
    if label.startswith("cosine:"):
        return DensitySpec("cosine_tilt", float(label.split(":", 1)[1]))
    raise ContractError(f"unknown density label {label!r}")


def read_cloud_csv(path) -> PointCloud:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if not header.startswith("# mfcn-cloud v1"):
            raise ContractError(f"{path}: not a cloud file")
        meta = {}
        for tok in header.split(",")[1:]:
            k, _, v = tok.strip().partition("=")
            meta[k] = v
        kind = meta["kind"]
        d, D = int(meta["d"]), int(meta["D"])
        seed = int(meta["seed"])
        dens = _parse_density(meta.get("density", "uniform"))
        fh.readline()  # column names
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(v) for v in r] for r in rows])
    if data.shape[1] != d + D:
        raise ContractError(f"{path}: expected {d + D} columns")
    spec = ManifoldSpec(kind, dens)
    return PointCloud(points=data[:, :D], intrinsic_coords=data[:, D:],
                      spec=spec, seed=seed)


# --------------------------------------------------------------------------
# Binary matrices
# --------------------------------------------------------------------------

def write_matrix(path, mat) -> None:
    path = Path(path)
    sparse = scipy.sparse.issparse(mat)
    with path.open("wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        if sparse:
            coo = mat.tocoo()
            order = np.lexsort((coo.col, coo.row))
            i = coo.row[order].astype("<u8")
            j = coo.col[order].astype("<u8")
            v = coo.data[order].astype("<f8")
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<QQ", mat.shape[0], mat.shape[1]))
            fh.write(struct.pack("<Q", len(v)))
            rec = np.empty(len(v), dtype=[("i", "<u8"), ("j", "<u8"), ("v", "<f8")])
            rec["i"], rec["j"], rec["v"] = i, j, v
            fh.write(rec.tobytes())
        else:
            arr = np.ascontiguousarray(np.asarray(mat, dtype="<f8"))
            if arr.ndim == 1:
                arr = arr[:, None]
            fh.write(struct.pack("<B", 0))
            fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())


def read_matrix(path):
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(8)
        if magic != MATRIX_MAGIC:
            raise ContractError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ContractError(f"{path}: unsupported version {version}")
        (kind,) = struct.unpack("<B", fh.read(1))
        rows, cols = struct.unpack("<QQ", fh.read(16))
        if kind == 0:
            data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
            return data.reshape(rows, cols).copy()
        if kind != 1:
            raise ContractError(f"{path}: unknown matrix kind {kind}")
        (nnz,) = struct.unpack("<Q", fh.read(8))
        rec = np.frombuffer(fh.read(nnz * 24),
                            dtype=[("i", "<u8"), ("j", "<u8"), ("v", "<f8")])
        return scipy.sparse.csr_matrix(
            (rec["v"].astype(float), (rec["i"].astype(np.int64), rec["j"].astype(np.int64))),
            shape=(rows, cols))


def write_graph(path, L: GraphLaplacian) -> None:
    path = Path(path)
    write_matrix(path, L.matrix)
    sidecar = {"family": L.family, "n": L.n, "scale": L.scale,
               "params": L.params, "disconnected": L.disconnected}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_graph(path) -> GraphLaplacian:
    path = Path(path)
    mat = read_matrix(path)
    side = json.loads(Path(str(path) + ".json").read_text())
    return GraphLaplacian(matrix=mat, family=side["family"], n=side["n"],
                          scale=side["scale"], params=side.get("params", {}),
                          disconnected=side.get("disconnected", False))


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_eigensystem(prefix, es: EigenSystem, graph_hash: str = "",
                      residual_max: float = 0.0) -> None:
    """Write <prefix>.evals.mat, <prefix>.evecs.mat and a JSON sidecar."""
    prefix = Path(prefix)
    write_matrix(str(prefix) + ".evals.mat", es.eigenvalues[:, None])
    write_matrix(str(prefix) + ".evecs.mat", es.eigenvectors)
    side = {"graph_hash": graph_hash, "kappa": es.kappa,
            "residual_max": residual_max, "complete": es.complete}
    Path(str(prefix) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def read_eigensystem(prefix) -> EigenSystem:
    prefix = Path(prefix)
    vals = np.asarray(read_matrix(str(prefix) + ".evals.mat")).ravel()
    vecs = np.asarray(read_matrix(str(prefix) + ".evecs.mat"))
    side = json.loads(Path(str(prefix) + ".json").read_text())
    return EigenSystem(vals, vecs, complete=side["complete"])


# --------------------------------------------------------------------------
# Filter / network JSON
# --------------------------------------------------------------------------

def filter_to_dict(w: FilterSpec) -> dict:
    d = {"kind": w.kind, "scale": w.scale}
    if w.kind == "heat":
        d["t"] = w.params[0]
    elif w.kind == "wavelet":
        d["j"] = w.params[0]
    elif w.kind == "ideal_lowpass":
        d["a"] = w.params[0]
    elif w.kind == "poly_exp":
        d["coeffs"] = list(w.params)
    elif w.kind == "custom_table":
        d["lams"] = list(w.params[0])
        d["vals"] = list(w.params[1])
    return d


def filter_from_dict(d: dict) -> FilterSpec:
    kind = d["kind"]
    if kind == "heat":
        w = FilterSpec.heat(d["t"])
    elif kind == "wavelet":
        w = FilterSpec.wavelet(d["j"])
    elif kind == "ideal_lowpass":
        w = FilterSpec.ideal_lowpass(d["a"])
    elif kind == "gcn_linear":
        w = FilterSpec.gcn_linear()
    elif kind == "poly_exp":
        w = FilterSpec.poly_exp(d["coeffs"])
    elif kind == "custom_table":
        w = FilterSpec.custom_table(d["lams"], d["vals"])
    else:
        raise ContractError(f"unknown filter kind {kind!r}")
    return w.scaled(d.get("scale", 1.0))


def parse_filter_label(text: str) -> FilterSpec:
    """Parse CLI filter descriptors like heat:t=1, wavelet:j=2, lowpass:a=0.5,
    gcn, poly:c0,c1,c2,c3,c4."""
    name, _, arg = text.partition(":")
    if name == "heat":
        return FilterSpec.heat(float(arg.split("=")[-1]))
    if name == "wavelet":
        return FilterSpec.wavelet(int(arg.split("=")[-1]))
    if name == "lowpass":
        return FilterSpec.ideal_lowpass(float(arg.split("=")[-1]))
    if name == "gcn":
        return FilterSpec.gcn_linear()
    if name == "poly":
        return FilterSpec.poly_exp([float(v) for v in arg.split(",")])
    raise ContractError(f"cannot parse filter spec {text!r}")


def layer_to_dict(layer: LayerSpec) -> dict:
    if layer._per_channel:
        filters = {"mode": "per_channel",
                   "grid": [[filter_to_dict(w) for w in row] for row in layer.filters]}
    else:
        filters = {"mode": "shared",
                   "bank": [filter_to_dict(w) for w in layer.filters]}
    return {
        "filters": filters,
        "theta": [m.tolist() for m in layer.theta],
        "alpha": [m.tolist() for m in layer.alpha],
        "activation": layer.activation,
    }


def layer_from_dict(d: dict) -> LayerSpec:
    f = d["filters"]
    if f["mode"] == "shared":
        filters = [filter_from_dict(x) for x in f["bank"]]
    else:
        filters = [[filter_from_dict(x) for x in row] for row in f["grid"]]
    return LayerSpec(filters=filters, theta=np.array(d["theta"], dtype=float),
                     alpha=np.array(d["alpha"], dtype=float),
                     activation=d["activation"])


def write_network_json(path, net: NetworkSpec) -> None:
    doc = {"version": FORMAT_VERSION,
           "input_channels": net.input_channels,
           "layers": [layer_to_dict(la) for la in net.layers]}
    Path(path).write_text(json.dumps(doc, indent=2))


def read_network_json(path) -> NetworkSpec:
    doc = json.loads(Path(path).read_text())
    return NetworkSpec(layers=[layer_from_dict(d) for d in doc["layers"]],
                       input_channels=doc["input_channels"])


# --------------------------------------------------------------------------
# Feature / signal CSV
# --------------------------------------------------------------------------

def write_values_csv(path, arr: np.ndarray, colnames=None) -> None:
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    with Path(path).open("w", newline="") as fh:
        if colnames is not None:
            fh.write(",".join(colnames) + "\n")
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_values_csv(path) -> np.ndarray:
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                continue  # header row
    if not rows:
        raise ContractError(f"{path}: no numeric rows")
    return np.array(rows)


# --------------------------------------------------------------------------
# Reports and manifests
# --------------------------------------------------------------------------

def write_report(outdir, report, emit_plot_data: bool = False) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    with (outdir / "report.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["family", "manifold", "n", "trial",
                                                "metric", "value", "flags"])
        writer.writeheader()
        manifold = report.config.get("manifold", "circle")
        for s in report.samples:
            for row in s.to_row_dicts():
                row["manifold"] = manifold
                writer.writerow(row)
    if emit_plot_data:
        _write_plot_data(outdir, report)


def _write_plot_data(outdir: Path, report) -> None:
    from .convergence import median_by_n
    n_grid = report.config["n_grid"]
    for metric in ("alpha", "beta", "gamma"):
        ns, med = median_by_n(report.samples, metric, n_grid)
        name = metric if metric != "gamma" else "gamma_sq"
        vals = med if metric != "gamma" else [m * m for m in med]
        fit = report.fits.get(name)
        with (outdir / f"plot_{name}.csv").open("w", newline="") as fh:
            fh.write("log_n,log_median,fit_line\n")
            for n, v in zip(ns, vals):
                ln = np.log(n)
                line = fit["intercept"] + fit["slope"] * ln if fit else float("nan")
                fh.write(f"{repr(float(ln))},{repr(float(np.log(v)))},{repr(float(line))}\n")


def write_manifest(out_path, command: str, resolved: dict, inputs: dict,
                   outputs: list) -> Path:
    """Write <out_path>.manifest.json describing a reproducible run."""
    man = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "resolved_config": resolved,
        "input_hashes": {str(k): file_hash(v) for k, v in inputs.items()},
        "outputs": [str(o) for o in outputs],
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(man, indent=2, sort_keys=True))
    return path
