import json
import math

import numpy as np
import pytest
import scipy.sparse

from mfcn import manifolds as mf
from mfcn import graphs as gr
from mfcn import spectral as sp
from mfcn import network as nw
from mfcn import io as mio
from mfcn.cli import main
from mfcn.errors import ContractError


def test_cloud_csv_roundtrip_bit_exact(tmp_path):
    spec = mf.ManifoldSpec("circle", mf.DensitySpec("cosine_tilt", 0.5))
    cloud = mf.sample_points(spec, 37, seed=99)
    p = tmp_path / "cloud.csv"
    mio.write_cloud_csv(p, cloud)
    back = mio.read_cloud_csv(p)
    assert np.array_equal(back.points, cloud.points)
    assert np.array_equal(back.intrinsic_coords, cloud.intrinsic_coords)
    assert back.seed == 99
    assert back.spec == spec


def test_matrix_roundtrip_dense_and_sparse(tmp_path):
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 7))
    A[0, 0] = 1e-300
    A[1, 1] = -0.1 + 1e-17
    p = tmp_path / "a.mat"
    mio.write_matrix(p, A)
    assert np.array_equal(mio.read_matrix(p), A)

    S = scipy.sparse.random(20, 20, density=0.2, random_state=0, format="csr")
    S = S + S.T
    p2 = tmp_path / "s.mat"
    mio.write_matrix(p2, S)
    back = mio.read_matrix(p2)
    assert scipy.sparse.issparse(back)
    assert np.array_equal(back.toarray(), S.toarray())


def test_matrix_header_layout(tmp_path):
    p = tmp_path / "m.mat"
    mio.write_matrix(p, np.array([[1.5]]))
    raw = p.read_bytes()
    assert raw[:8] == b"MFCNMAT1"
    assert raw[8:12] == (1).to_bytes(4, "little")
    assert raw[12] == 0  # dense
    assert int.from_bytes(raw[13:21], "little") == 1
    assert int.from_bytes(raw[21:29], "little") == 1
    assert np.frombuffer(raw[29:], dtype="<f8")[0] == 1.5

    (tmp_path / "bad.mat").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(ContractError):
        mio.read_matrix(tmp_path / "bad.mat")


def test_eigensystem_roundtrip(tmp_path):
    cloud = mf.sample_points(mf.ManifoldSpec("circle"), 24, seed=2)
    L = gr.build_epsilon(cloud, 1.0, 1)
    es = sp.eig_partial(L, 5)
    prefix = tmp_path / "eig"
    mio.write_eigensystem(prefix, es, graph_hash="abc",
                          residual_max=es.max_residual(L.matrix))
    back = mio.read_eigensystem(prefix)
    assert np.array_equal(back.eigenvalues, es.eigenvalues)
    assert np.array_equal(back.eigenvectors, es.eigenvectors)
    assert back.complete == es.complete


def test_network_json_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    layer1 = nw.LayerSpec(filters=[sp.FilterSpec.heat(0.5), sp.FilterSpec.wavelet(2)],
                          theta=rng.standard_normal((2, 3, 2)),
                          alpha=rng.standard_normal((2, 2, 2)),
                          activation="relu")
    grid = [[sp.FilterSpec.poly_exp((0.1, 0.2, 0, 0, 0)).scaled(2.0),
             sp.FilterSpec.gcn_linear(), sp.FilterSpec.ideal_lowpass(1.5),
             sp.FilterSpec.custom_table([0, 1], [1, 0])]]
    layer2 = nw.LayerSpec(filters=grid, theta=rng.standard_normal((1, 4, 1)),
                          alpha=np.eye(1), activation="abs")
    net = nw.NetworkSpec(layers=[layer1, layer2], input_channels=3)
    p = tmp_path / "net.json"
    mio.write_network_json(p, net)
    back = mio.read_network_json(p)
    assert back.input_channels == 3
    assert len(back.layers) == 2
    assert np.array_equal(back.layers[0].theta, layer1.theta)
    assert np.array_equal(back.layers[0].alpha, layer1.alpha)
    lam = np.linspace(0, 4, 33)
    for j in range(2):
        assert np.array_equal(back.layers[0].filters[j](lam), layer1.filters[j](lam))
    for k in range(4):
        assert np.array_equal(back.layers[1].filter_at(0, k)(lam),
                              layer2.filter_at(0, k)(lam))


def test_values_csv_roundtrip(tmp_path):
    arr = np.random.default_rng(0).standard_normal((6, 3))
    p = tmp_path / "v.csv"
    mio.write_values_csv(p, arr, colnames=["a", "b", "c"])
    assert np.array_equal(mio.read_values_csv(p), arr)


# ---------------------------------------------------------------- CLI

def test_cli_version(capsys):
    assert main(["--version"]) == 0
    assert "mfcn" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    assert main(["sample", "--manifold", "klein", "--n", "4", "--seed", "1",
                 "--out", str(tmp_path / "x.csv")]) == 1       # usage
    assert main(["nonsense"]) == 1
    assert main(["graph", "--cloud", str(tmp_path / "missing.csv"),
                 "--family", "dense", "--out", str(tmp_path / "g.mat")]) == 2  # data


def test_cli_sample_deterministic(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (out1, out2):
        rc = main(["sample", "--manifold", "circle", "--density", "uniform",
                   "--n", "4", "--seed", "1", "--out", str(out)])
        assert rc == 0
    assert out1.read_bytes() == out2.read_bytes()
    cloud = mio.read_cloud_csv(out1)
    assert cloud.n == 4
    assert np.max(np.abs(np.linalg.norm(cloud.points, axis=1) - 1)) <= 1e-12
    assert (tmp_path / "a.csv.manifest.json").exists()


def test_cli_graph_matches_hand_example(tmp_path):
    # dense Gaussian on two points at distance 2 with eps = 1
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    cloud = mf.PointCloud(points=pts, intrinsic_coords=np.array([[0.0], [0.0]]),
                          spec=mf.ManifoldSpec("circle"), seed=-1)
    cpath = tmp_path / "two.csv"
    mio.write_cloud_csv(cpath, cloud)
    gpath = tmp_path / "g.mat"
    rc = main(["graph", "--cloud", str(cpath), "--family", "dense",
               "--param", "1.0", "--out", str(gpath)])
    assert rc == 0
    L = mio.read_graph(gpath)
    W12 = math.exp(-4.0) / 2.0
    assert L.toarray()[0, 1] == pytest.approx(-W12, rel=1e-12)


def test_cli_ring_pipeline_and_filter_identity(tmp_path):
    # equispaced 4-ring -> epsilon graph -> eigensolve -> heat t=0 is identity
    cloud = mf.equispaced_circle_cloud(4)
    cpath = tmp_path / "ring.csv"
    mio.write_cloud_csv(cpath, cloud)
    gpath = tmp_path / "ring.mat"
    assert main(["graph", "--cloud", str(cpath), "--family", "epsilon",
                 "--param", "1.5", "--out", str(gpath)]) == 0
    eprefix = tmp_path / "ring_eig"
    assert main(["eig", "--graph", str(gpath), "--kappa", "all",
                 "--out", str(eprefix)]) == 0
    es = mio.read_eigensystem(eprefix)
    expected = sorted((2 / 3) / (4 * 1.5**3) * (2 - 2 * np.cos(2 * np.pi * k / 4))
                      for k in range(4))
    assert np.allclose(es.eigenvalues, expected, atol=1e-10)

    sig = tmp_path / "sig.csv"
    x = np.random.default_rng(3).standard_normal((4, 2))
    mio.write_values_csv(sig, x)
    out = tmp_path / "filtered.csv"
    assert main(["filter", "--eig", str(eprefix), "--spec", "heat:t=0",
                 "--signal", str(sig), "--out", str(out)]) == 0
    assert np.max(np.abs(mio.read_values_csv(out) - x)) <= 1e-12


def test_cli_forward(tmp_path):
    cloud = mf.sample_points(mf.ManifoldSpec("circle"), 16, seed=0)
    cpath = tmp_path / "c.csv"
    mio.write_cloud_csv(cpath, cloud)
    gpath = tmp_path / "g.mat"
    main(["graph", "--cloud", str(cpath), "--family", "dense", "--param", "0.5",
          "--out", str(gpath)])
    eprefix = tmp_path / "e"
    main(["eig", "--graph", str(gpath), "--kappa", "all", "--out", str(eprefix)])

    net = nw.NetworkSpec(layers=[nw.LayerSpec.identity_layer(2)], input_channels=2)
    npath = tmp_path / "net.json"
    mio.write_network_json(npath, net)
    X = np.random.default_rng(1).standard_normal((16, 2))
    xpath = tmp_path / "x.csv"
    mio.write_values_csv(xpath, X)
    out = tmp_path / "y.csv"
    assert main(["forward", "--eig", str(eprefix), "--net", str(npath),
                 "--input", str(xpath), "--out", str(out)]) == 0
    assert np.max(np.abs(mio.read_values_csv(out) - X)) <= 1e-9


def test_cli_scatter_constant_and_permutation(tmp_path):
    cloud = mf.sample_points(mf.ManifoldSpec("circle"), 64, seed=5)
    cpath = tmp_path / "c.csv"
    mio.write_cloud_csv(cpath, cloud)
    sig = tmp_path / "s.csv"
    mio.write_values_csv(sig, np.ones((64, 1)))
    out = tmp_path / "f.csv"
    rc = main(["scatter", "--input", str(cpath), "--mode", "spectral",
               "--J", "4", "--Q", "4", "--signals", str(sig),
               "--family", "epsilon", "--param", "1.0", "--out", str(out)])
    assert rc == 0
    feats = mio.read_values_csv(out).ravel()
    assert feats.shape == (64,)
    assert np.allclose(feats[:4], 1.0, atol=1e-8)
    assert np.max(np.abs(feats[4:])) <= 1e-8

    # permuting the cloud rows leaves the features unchanged
    perm = np.random.default_rng(0).permutation(64)
    cloud_p = mf.PointCloud(points=cloud.points[perm],
                            intrinsic_coords=cloud.intrinsic_coords[perm],
                            spec=cloud.spec, seed=cloud.seed)
    cpath2 = tmp_path / "cp.csv"
    mio.write_cloud_csv(cpath2, cloud_p)
    out2 = tmp_path / "f2.csv"
    xyz = tmp_path / "xyz.csv"
    mio.write_values_csv(xyz, cloud.points)
    xyz_p = tmp_path / "xyzp.csv"
    mio.write_values_csv(xyz_p, cloud.points[perm])
    for cp, sg, op in ((cpath, xyz, out), (cpath2, xyz_p, out2)):
        assert main(["scatter", "--input", str(cp), "--mode", "approx",
                     "--J", "3", "--Q", "2", "--signals", str(sg),
                     "--family", "epsilon", "--param", "1.0", "--out", str(op)]) == 0
    a, b = mio.read_values_csv(out).ravel(), mio.read_values_csv(out2).ravel()
    assert np.max(np.abs(a - b)) <= 1e-10


def test_cli_converge_synthetic_and_assert(tmp_path):
    out = tmp_path / "rep"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_grid": [100, 200, 400], "trials": 2}))
    rc = main(["converge", "--config", str(cfg), "--out", str(out),
               "--synthetic", "r=0.5", "--assert"])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["fits"]["alpha"]["slope"] == pytest.approx(-0.5, abs=1e-12)

    # an assertion that cannot hold: synthetic slope far from the target band
    cfg2 = tmp_path / "cfg2.json"
    cfg2.write_text(json.dumps({"n_grid": [100, 200, 400], "trials": 2,
                                "assertions": {"alpha_slope": [-0.65, -0.35]}}))
    rc = main(["converge", "--config", str(cfg2), "--out", str(tmp_path / "rep2"),
               "--synthetic", "r=0.05", "--assert"])
    assert rc == 3


def test_cli_converge_report_only_single_n(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"family": "epsilon", "n_grid": [128], "trials": 1,
                               "kappa": 4, "measure_filters": False}))
    out = tmp_path / "rep"
    assert main(["converge", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["fits"]["alpha"] is None
    assert (out / "report.csv").exists()


def test_cli_emit_plot_data(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_grid": [100, 200, 400], "trials": 1}))
    out = tmp_path / "rep"
    assert main(["converge", "--config", str(cfg), "--out", str(out),
                 "--synthetic", "0.3", "--emit-plot-data"]) == 0
    table = (out / "plot_alpha.csv").read_text().splitlines()
    assert table[0] == "log_n,log_median,fit_line" or len(table) == 4


def test_manifest_rerun_reproduces(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["sample", "--manifold", "circle", "--density", "cosine:0.3",
                 "--n", "32", "--seed", "11", "--out", str(out)]) == 0
    original = out.read_bytes()
    out.unlink()
    assert main(["rerun", str(out) + ".manifest.json"]) == 0
    assert out.read_bytes() == original


def test_manifest_rerun_graph_auto(tmp_path):
    cpath = tmp_path / "c.csv"
    main(["sample", "--manifold", "circle", "--n", "64", "--seed", "3",
          "--out", str(cpath)])
    gpath = tmp_path / "g.mat"
    assert main(["graph", "--cloud", str(cpath), "--family", "epsilon",
                 "--param", "AUTO", "--out", str(gpath)]) == 0
    original = gpath.read_bytes()
    man = json.loads((tmp_path / "g.mat.manifest.json").read_text())
    assert man["resolved_config"]["schedule_c"] is not None
    gpath.unlink()
    assert main(["rerun", str(gpath) + ".manifest.json"]) == 0
    assert gpath.read_bytes() == original
