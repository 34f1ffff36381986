import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_view, posed_view, random_plane, random_pose
from hoverdepth.errors import DegenerateConfiguration, DegeneratePlane, NegativeIntersection, NonPositiveDepth, \
    RayParallelToPlane
from hoverdepth.geometry import (PlaneSurface, WarpBasis, apply_homography, back_project, canonical_camera_plane,
                                 depth_on_plane, depths_on_plane, fit_plane, fronto_parallel_plane, params_to_plane,
                                 plane_homography, plane_in_camera, plane_to_params, project, project_points)


def matrix_chain_project(view, X):
    # homogeneous world -> camera -> image, composed explicitly
    T = np.eye(4)
    T[:3, :3] = view.rotation
    T[:3, 3] = view.translation
    P = np.hstack([view.intrinsics.K, np.zeros((3, 1))]) @ T
    x = P @ np.append(X, 1.0)
    return x[:2] / x[2]


def ray_plane_pixel(ref, target, plane, px):
    # world ray through the reference pixel, intersected with the plane, projected into target
    K = ref.intrinsics.K
    d_cam = np.linalg.solve(K, [px[0], px[1], 1.0])
    origin = ref.center
    direction = ref.rotation.T @ d_cam
    lam = plane.normal @ (plane.point - origin) / (plane.normal @ direction)
    return matrix_chain_project(target, origin + lam * direction)


def test_project_optical_axis():
    v = make_view(w=2, h=2, f=1.0, cx=0.0, cy=0.0)
    assert np.allclose(project(v, [0, 0, 1]), [0, 0])


def test_project_arithmetic():
    v = make_view(w=640, h=480, f=100.0, cx=320.0, cy=240.0)
    assert np.allclose(project(v, [1, 0, 2]), [370, 240])


def test_project_matches_matrix_chain(rng):
    for _ in range(50):
        R, t = random_pose(rng)
        v = make_view(R=R, t=t)
        X = v.rotation.T @ (np.array([*rng.uniform(-1, 1, 2), rng.uniform(1, 5)]) - v.translation)
        assert np.allclose(project(v, X), matrix_chain_project(v, X), atol=1e-9, rtol=0)


def test_project_behind_camera():
    with pytest.raises(NonPositiveDepth):
        project(make_view(), [0, 0, -1])
    uv, z = project_points(make_view(), [[0, 0, -1], [0, 0, 2]])
    assert np.isnan(uv[0]).all() and np.isfinite(uv[1]).all()


def test_rotation_validation():
    with pytest.raises(ValueError):
        make_view(R=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        make_view(weight=0.0)


def test_homography_identity():
    v = make_view()
    H = plane_homography(v, v, fronto_parallel_plane(v, 3.0))
    assert np.allclose(H / H[2, 2], np.eye(3), atol=1e-12)


def test_homography_pure_translation_shift():
    f, b, d = 500.0, 0.01, 2.5
    ref = make_view(f=f)
    tgt = make_view(f=f, t=np.array([b, 0.0, 0.0]))
    H = plane_homography(ref, tgt, fronto_parallel_plane(ref, d))
    u, v = apply_homography(H, np.array([3.0, 40.0]), np.array([7.0, 20.0]))
    assert np.allclose(u - [3.0, 40.0], f * b / d, atol=1e-12)
    assert np.allclose(v, [7.0, 20.0], atol=1e-12)
    oracle = ray_plane_pixel(ref, tgt, fronto_parallel_plane(ref, d), (3.0, 7.0))
    assert np.allclose([u[0], v[0]], oracle, atol=1e-9)


def test_homography_matches_ray_plane_oracle(rng):
    for _ in range(20):
        ref = posed_view(rng)
        tgt = posed_view(rng)
        plane = random_plane(rng)
        plane = PlaneSurface(ref.rotation.T @ (plane.point - ref.translation), ref.rotation.T @ plane.normal)
        H = plane_homography(ref, tgt, plane)
        for _ in range(50):
            px = rng.uniform(0, 64, 2)
            u, v = apply_homography(H, px[0], px[1])
            assert np.allclose([u, v], ray_plane_pixel(ref, tgt, plane, px), atol=1e-6, rtol=0)


def test_homography_composition(rng):
    a, b, ref = (make_view(R=R, t=t) for R, t in (random_pose(rng, 0.05, 0.05) for _ in range(3)))
    plane = PlaneSurface((0.1, -0.2, 3.0), (0.2, 0.1, -1.0))
    direct = plane_homography(ref, a, plane)
    chained = plane_homography(b, a, plane) @ plane_homography(ref, b, plane)
    direct, chained = direct / direct[2, 2], chained / chained[2, 2]
    assert np.linalg.norm(direct - chained) / np.linalg.norm(direct) < 1e-6


def test_homography_degenerate():
    v = make_view()
    with pytest.raises(DegeneratePlane):
        plane_homography(v, make_view(t=np.array([0.1, 0, 0])), PlaneSurface((0, 0, 0), (1, 0, 0)))


def test_warp_basis_matches_plane_homography(rng):
    ref = make_view()
    views = [make_view(R=R, t=t) for R, t in (random_pose(rng, 0.02, 0.02) for _ in range(4))]
    planes = [random_plane(rng) for _ in range(5)]
    cam = [plane_in_camera(ref, p) for p in planes]
    H = WarpBasis(ref, views).homographies(np.array([n for n, _ in cam]), np.array([d for _, d in cam]))
    for k, p in enumerate(planes):
        for j, v in enumerate(views):
            assert np.allclose(H[k, j], plane_homography(ref, v, p), rtol=1e-12, atol=1e-9)


def test_fit_plane_three_points():
    plane = fit_plane([[0, 0, 2], [1, 0, 2], [0, 1, 2]])
    assert np.allclose(plane.point, [1 / 3, 1 / 3, 2])
    assert np.allclose(plane.normal, [0, 0, -1])  # toward the origin


def test_fit_plane_exact(rng):
    xy = rng.uniform(-1, 1, (100, 2))
    pts = np.column_stack([xy, 3 - xy.sum(1)])
    plane, rms = fit_plane(pts, return_rms=True)
    assert rms < 1e-12
    assert np.allclose(abs(plane.normal @ np.ones(3) / np.sqrt(3)), 1.0)


def test_fit_plane_noisy_normal(rng):
    truth = np.array([0.2, -0.3, 1.0]) / np.linalg.norm([0.2, -0.3, 1.0])
    e1 = np.cross(truth, [1, 0, 0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(truth, e1)
    a, b = rng.uniform(-1, 1, (2, 500))
    pts = 4 * truth + a[:, None] * e1 + b[:, None] * e2 + rng.normal(0, 0.01, (500, 3))
    # scatter-matrix oracle: eigenvector of the smallest eigenvalue
    Q = pts - pts.mean(0)
    _, vecs = np.linalg.eigh(Q.T @ Q)
    plane = fit_plane(pts)
    assert abs(plane.normal @ vecs[:, 0]) > 1 - 1e-9
    assert np.degrees(np.arccos(min(1.0, abs(plane.normal @ truth)))) < 1.0


def test_fit_plane_degenerate():
    with pytest.raises(DegenerateConfiguration):
        fit_plane([[0, 0, 1], [1, 1, 1]])
    with pytest.raises(DegenerateConfiguration):
        fit_plane([[0, 0, 1], [1, 1, 2], [2, 2, 3]])


def test_fit_plane_rigid_invariance(rng):
    pts = rng.normal(size=(30, 3)) * [1, 1, 0.05] + [0, 0, 3]
    R, t = random_pose(rng, 1.0, 1.0)
    a = fit_plane(pts, viewpoint=np.zeros(3))
    b = fit_plane(pts @ R.T + t, viewpoint=t)
    assert np.allclose(R @ a.normal, b.normal, atol=1e-9)
    assert np.allclose(a.signed_distance(pts), b.signed_distance(pts @ R.T + t), atol=1e-9)


def test_depth_on_plane_principal():
    v = make_view()
    k = v.intrinsics
    assert depth_on_plane(v, (k.cx, k.cy), fronto_parallel_plane(v, 3.0)) == pytest.approx(3.0, abs=1e-12)


def test_depth_on_tilted_plane(rng):
    for _ in range(20):
        R, t = random_pose(rng)
        v = make_view(R=R, t=t)
        plane = random_plane(rng)
        plane = PlaneSurface(v.rotation.T @ (plane.point - v.translation), v.rotation.T @ plane.normal)
        px = rng.uniform(0, 64, 2)
        # parametric solve in the world frame: c + s * dir on the plane
        d = v.rotation.T @ np.linalg.solve(v.intrinsics.K, [px[0], px[1], 1.0])
        s = plane.normal @ (plane.point - v.center) / (plane.normal @ d)
        assert depth_on_plane(v, px, plane) == pytest.approx(s, abs=1e-9)


def test_depth_on_plane_errors():
    v = make_view()
    with pytest.raises(NegativeIntersection):
        depth_on_plane(v, (10, 10), PlaneSurface((0, 0, -2), (0, 0, 1)))
    with pytest.raises(RayParallelToPlane):
        depth_on_plane(v, (v.intrinsics.cx, v.intrinsics.cy), PlaneSurface((1, 0, 0), (1, 0, 0)))
    assert np.isnan(depths_on_plane(v, [10.0], [10.0], PlaneSurface((0, 0, -2), (0, 0, 1)))).all()


def test_params_round_trip(rng):
    v = make_view()
    for _ in range(20):
        plane = random_plane(rng).oriented_toward(v.center)
        px = rng.uniform(0, 64, 2)
        back = params_to_plane(v, px, plane_to_params(v, px, plane))
        assert np.allclose(back.normal, plane.normal, atol=1e-9)
        assert abs(back.signed_distance(plane.point)) < 1e-9


def test_canonical_camera_plane():
    n, d = canonical_camera_plane(np.array([[0, 0, 1.0], [0, 0, -1.0]]), np.array([2.0, -2.0]))
    assert np.array_equal(n, [[0, 0, -1.0], [0, 0, -1.0]]) and np.array_equal(d, [-2.0, -2.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_depth_of_projected_point(seed):
    rng = np.random.default_rng(seed)
    R, t = random_pose(rng)
    v = make_view(R=R, t=t)
    X_cam = np.array([*rng.uniform(-0.5, 0.5, 2), rng.uniform(1, 6)])
    X = v.rotation.T @ (X_cam - v.translation)
    n = rng.normal(size=3)
    if abs(n @ (v.rotation.T @ X_cam)) < 0.2 * np.linalg.norm(n) * np.linalg.norm(X_cam):
        n = v.rotation.T @ np.array([0, 0, -1.0])  # keep away from grazing rays
    plane = PlaneSurface(X, n)
    assert depth_on_plane(v, project(v, X), plane) == pytest.approx(X_cam[2], abs=1e-9)
    assert np.allclose(back_project(v, project(v, X), X_cam[2]), X, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_homography_consistency_property(seed):
    rng = np.random.default_rng(seed)
    ref = make_view(R=random_pose(rng)[0])
    tgt = posed_view(rng, 0.05, 0.05)
    plane = random_plane(rng)
    plane = PlaneSurface(ref.rotation.T @ plane.point, ref.rotation.T @ plane.normal)
    H = plane_homography(ref, tgt, plane)
    xs, ys = rng.uniform(0, 64, 10), rng.uniform(0, 48, 10)
    u, v = apply_homography(H, xs, ys)
    oracle = np.array([ray_plane_pixel(ref, tgt, plane, (x, y)) for x, y in zip(xs, ys)])
    assert np.allclose(np.column_stack([u, v]), oracle, atol=1e-6, rtol=0)
