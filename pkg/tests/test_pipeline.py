import json
import warnings

import numpy as np
import pytest

from conftest import make_view
from hoverdepth import cli
from hoverdepth import io as hio
from hoverdepth.config import PipelineConfig
from hoverdepth.depthmap import DepthMap, evaluate
from hoverdepth.errors import ManifestError, NoOverlap
from hoverdepth.geometry import PlaneSurface, SparseCloud, fronto_parallel_plane
from hoverdepth.patch_graph import tessellate
from hoverdepth.pipeline import DatasetManifest, reconstruct, render, run
from hoverdepth.synthetic import PlaneSpec, SceneSpec, generate_synthetic

SMALL = dict(width=96, height=72, n_views=6, noise=0.5, seed_density=0.1)


@pytest.fixture(scope="module")
def two_plane_scene():
    return generate_synthetic(SceneSpec(**SMALL, planes=[
        PlaneSpec(point=(0, 0, 4), color=(70, 130, 190), texture=15),
        PlaneSpec(point=(0, 0, 2), region=[0, 0, 48, 72], color=(200, 120, 60), texture=15)]))


def test_evaluate_identical_and_offset(rng):
    truth = DepthMap.from_array(rng.uniform(1, 5, (10, 12)))
    m = evaluate(truth, truth)
    assert m["mae"] == 0.0 and m["rmse"] == 0.0 and m["within_1pct"] == 1.0 and m["coverage"] == 1.0
    m = evaluate(DepthMap.from_array(truth.depth + 0.1), truth)
    assert m["mae"] == pytest.approx(0.1) and m["rmse"] == pytest.approx(0.1)


def test_evaluate_loop_oracle(rng):
    a = rng.uniform(1, 5, (9, 11))
    b = a * rng.uniform(0.85, 1.15, a.shape)
    a[rng.uniform(size=a.shape) < 0.2] = np.nan
    b[rng.uniform(size=b.shape) < 0.2] = -1.0
    m = evaluate(DepthMap.from_array(b), DepthMap.from_array(a))
    errs, rels, n_truth = [], [], 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if np.isfinite(a[i, j]):
                n_truth += 1
                if b[i, j] > 0:
                    errs.append(abs(b[i, j] - a[i, j]))
                    rels.append(errs[-1] / a[i, j])
    errs, rels = np.array(errs), np.array(rels)
    assert m["mae"] == pytest.approx(errs.mean(), rel=1e-12)
    assert m["rmse"] == pytest.approx(np.sqrt((errs ** 2).mean()), rel=1e-12)
    for key, lim in (("within_1pct", 0.01), ("within_5pct", 0.05), ("within_10pct", 0.10)):
        assert m[key] == pytest.approx((rels <= lim).mean())
    assert m["coverage"] == pytest.approx(len(errs) / n_truth) and m["pixels"] == len(errs)


def test_evaluate_errors():
    a = DepthMap.from_array(np.full((2, 2), np.nan))
    with pytest.raises(NoOverlap):
        evaluate(a, DepthMap.from_array(np.ones((2, 2))))
    with pytest.raises(ValueError):
        evaluate(DepthMap.from_array(np.ones((2, 3))), DepthMap.from_array(np.ones((2, 2))))


def test_depthmap_validation():
    with pytest.raises(ValueError):
        DepthMap(np.zeros((2, 2)), np.ones((2, 2), dtype=bool))
    d = DepthMap.from_array([[1.0, -1.0], [np.inf, 2.0]])
    assert d.mask.tolist() == [[True, False], [False, True]] and d.coverage == 0.5


def test_render_fronto_parallel():
    view = make_view()
    patches = tessellate(np.ones(view.shape, dtype=bool), 8)
    d = render(patches, [fronto_parallel_plane(view, 3.0)] * len(patches), view)
    assert np.allclose(d.depth, 3.0, atol=1e-12) and d.coverage == 1.0


def test_render_crease_and_invalid():
    view = make_view(w=32, h=16, f=100.0)
    a = PlaneSurface((0, 0, 3), (0.3, 0, -1))
    b = PlaneSurface((0, 0, 3), (-0.3, 0, -1))
    patches = tessellate(np.ones(view.shape, dtype=bool), 8)
    planes = [a if p.xs.mean() < 16 else b for p in patches]
    planes[-1] = None
    d = render(patches, planes, view)
    x = (np.arange(32) - view.intrinsics.cx) / 100.0
    for p, pl in zip(patches, planes):
        if pl is None:
            assert not d.mask[p.ys, p.xs].any()
            continue
        s = 0.3 if pl is a else -0.3
        assert np.allclose(d.depth[p.ys, p.xs], 3.0 / (1 - s * x[p.xs]), atol=1e-6)


def test_synthetic_construction():
    scene = generate_synthetic(SceneSpec(width=64, height=48, n_views=3, noise=0.0, seed_density=0.2, planes=[
        PlaneSpec(point=(0, 0, 3), normal=(0.2, 0.1, -1))]))
    pl = scene.planes[0]
    assert np.abs(pl.signed_distance(scene.cloud.positions)).max() < 1e-12
    assert len(scene.views) == 3 and scene.truth.coverage == 1.0


def test_synthetic_step_and_dropout(two_plane_scene):
    t = two_plane_scene.truth.depth
    assert np.allclose(t[:, :48], 2.0) and np.allclose(t[:, 48:], 4.0)
    dropped = generate_synthetic(SceneSpec(**SMALL, planes=[
        PlaneSpec(point=(0, 0, 4)), PlaneSpec(point=(0, 0, 2), region=[0, 0, 48, 72], dropout=1.0)]))
    assert len(dropped.cloud) > 0 and np.all(dropped.seed_planes == 0)


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(baseline=0.0)
    with pytest.raises(ValueError):
        generate_synthetic(SceneSpec(width=16, height=12, planes=[PlaneSpec(pattern="stripes")]))


def test_manifest_validation(tmp_path):
    k = make_view().intrinsics
    with pytest.raises(ManifestError):
        DatasetManifest(["a.png"], [(np.eye(3), np.zeros(3))], k, "c.txt").validate()
    with pytest.raises(ManifestError):
        DatasetManifest(["a.png", "b.png"], [(np.eye(3), np.zeros(3))], k, "c.txt").validate()
    with pytest.raises(ManifestError):
        DatasetManifest(["a.png", "b.png"], [(np.eye(3), np.zeros(3))] * 2, k, "c.txt", 5).validate()
    with pytest.warns(UserWarning):
        DatasetManifest(["a.png", "b.png"], [(np.eye(3), np.zeros(3))] * 2, k, "c.txt").validate(20)
    with pytest.raises(ManifestError):
        DatasetManifest.from_dict({"images": []})
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(ManifestError):
        DatasetManifest.load(path)


def test_manifest_round_trip(tmp_path):
    k = make_view().intrinsics
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    m = DatasetManifest(["a.png", "b.png"], [(np.eye(3), np.zeros(3)), (R, np.array([0.1, 0, 0]))], k, "c.txt", 1)
    m.save(tmp_path / "m.json")
    back = DatasetManifest.load(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict() and back.root == tmp_path


def test_pfm_round_trip(tmp_path, rng):
    arr = rng.uniform(0.5, 9, (7, 5)).astype(np.float32).astype(np.float64)
    arr[2, 3] = np.nan
    d = DepthMap.from_array(arr)
    hio.write_pfm(tmp_path / "d.pfm", d)
    back = hio.read_pfm(tmp_path / "d.pfm")
    assert np.array_equal(back.mask, d.mask)
    assert np.array_equal(back.depth[d.mask], d.depth[d.mask])
    raw = (tmp_path / "d.pfm").read_bytes()
    assert raw.startswith(b"Pf\n5 7\n-1.0\n")
    body = np.frombuffer(raw[len(b"Pf\n5 7\n-1.0\n"):], "<f4").reshape(7, 5)[::-1]
    assert body[2, 3] == -1.0 and body[0, 0] == np.float32(arr[0, 0])


def test_colorize_depth():
    d = DepthMap.from_array([[1.0, 2.0, np.nan]])
    img = hio.colorize_depth(d)
    assert img[0, 2].tolist() == [0, 0, 0]
    assert img[0, 0].sum() > img[0, 1].sum()  # near is bright


def test_cloud_round_trip(tmp_path, rng):
    c = SparseCloud(rng.normal(size=(5, 3)), rng.uniform(0, 255, (5, 3)), rng.uniform(0, 1, 5))
    hio.write_cloud(tmp_path / "c.txt", c)
    back = hio.read_cloud(tmp_path / "c.txt")
    assert np.array_equal(back.positions, c.positions) and np.array_equal(back.errors, c.errors)
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(ValueError):
        hio.read_cloud(tmp_path / "bad.txt")


def test_config_round_trip(tmp_path):
    cfg = PipelineConfig()
    cfg.energy.tau = 2.0
    cfg.dump(tmp_path / "c.json")
    back = PipelineConfig.load(tmp_path / "c.json")
    assert back.to_dict() == cfg.to_dict()
    defaults = PipelineConfig().to_dict()["energy"]
    assert (defaults["delta"], defaults["lambda_g"], defaults["rho1"], defaults["rho2"], defaults["rho3"]) == \
        (7.0, 3.0, 0.6, 3.5, 20.0)


def test_config_unknown_keys():
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"energy": {"bogus": 1}})


def test_reconstruct_two_planes(two_plane_scene):
    s = two_plane_scene
    r = reconstruct(s.views, s.cloud, s.rgb, PipelineConfig(min_images=2))
    m = evaluate(r.depth, s.truth)
    assert m["coverage"] > 0.99 and m["mae"] < 0.05
    rep = r.report()
    assert rep["patches"] == sum(len(x.graph.patches) for x in r.segments)
    assert set(rep["timings"]) >= {"segmentation", "patches", "solve", "render"}
    json.dumps(rep)


def test_textureless_zero_seed_segment_invalid():
    luma_match = (129.9 - 0.299 * 100 - 0.114 * 100) / 0.587  # same grey level as the wall
    s = generate_synthetic(SceneSpec(width=96, height=72, n_views=5, noise=0.0, seed_density=0.1, planes=[
        PlaneSpec(point=(0, 0, 4), color=(200, 100, 100), texture=0),
        PlaneSpec(point=(0, 0, 2), region=[24, 18, 72, 54], color=(100, luma_match, 100), texture=0, dropout=1.0)]))
    r = reconstruct(s.views, s.cloud, s.rgb, PipelineConfig(min_images=2))
    invalid = [x for x in r.segments if not x.valid]
    assert len(invalid) == 1 and "UninitializableSegment" in invalid[0].error
    panel = s.plane_ids == 1
    assert not r.depth.mask[panel].any()
    assert r.depth.mask[~panel].all()
    assert np.allclose(r.depth.depth[~panel], 4.0, atol=1e-6)
    # coverage accounting
    bad = sum(p.size for x in invalid for p in x.graph.patches)
    assert r.depth.mask.sum() + bad == r.depth.mask.size


def test_reconstruct_deterministic_across_workers(two_plane_scene):
    s = two_plane_scene
    maps = []
    for workers in (1, 1, 2):
        r = reconstruct(s.views, s.cloud, s.rgb, PipelineConfig(min_images=2, workers=workers))
        maps.append(r.depth.depth)
    assert np.array_equal(maps[0], maps[1], equal_nan=True)
    assert np.array_equal(maps[0], maps[2], equal_nan=True)


def test_cli_round_trip(tmp_path, capsys):
    scene = {"width": 64, "height": 48, "n_views": 4, "seed_density": 0.1,
             "planes": [{"point": [0, 0, 3], "color": [120, 110, 100]}]}
    (tmp_path / "scene.json").write_text(json.dumps(scene))
    (tmp_path / "cfg.json").write_text(json.dumps({"min_images": 2}))
    assert cli.main(["synth", "--scene", str(tmp_path / "scene.json"), "--out", str(tmp_path / "data")]) == 0
    assert cli.main(["reconstruct", "--manifest", str(tmp_path / "data" / "manifest.json"), "--config",
                     str(tmp_path / "cfg.json"), "--out", str(tmp_path / "out"), "--debug"]) == 0
    for name in ("depth.pfm", "depth.png", "report.json", "segments.png", "init_sources.png", "patches.png"):
        assert (tmp_path / "out" / name).exists()
    capsys.readouterr()
    assert cli.main(["eval", "--pred", str(tmp_path / "out" / "depth.pfm"), "--truth",
                     str(tmp_path / "data" / "truth.pfm")]) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["coverage"] > 0.99 and metrics["mae"] < 0.03


def test_cli_reports_bad_manifest(tmp_path, capsys):
    (tmp_path / "m.json").write_text(json.dumps({"images": ["a.png"], "poses": [{"R": np.eye(3).ravel().tolist(),
                                                 "t": [0, 0, 0]}], "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0},
                                                 "cloud": "c.txt"}))
    assert cli.main(["reconstruct", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 2
    assert "at least 2 images" in capsys.readouterr().err


def test_run_from_manifest(tmp_path):
    scene = generate_synthetic(SceneSpec(width=64, height=48, n_views=3, noise=0.0, seed_density=0.1))
    names = []
    for i, rgb in enumerate(scene.rgb_views):
        hio.write_image(tmp_path / f"v{i}.png", rgb)
        names.append(f"v{i}.png")
    hio.write_cloud(tmp_path / "c.txt", scene.cloud)
    m = DatasetManifest(names, [(v.rotation, v.translation) for v in scene.views], scene.spec.intrinsics, "c.txt",
                        root=tmp_path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = run(m, PipelineConfig(min_images=2))
    assert "load" in r.timings and r.depth.coverage == 1.0
