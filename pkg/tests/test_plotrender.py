import numpy as np
import pytest

from helpers import make_segment
from plotbench.errors import RejectedInputError
from plotbench.plotrender import (
    ABLATION_DPIS,
    PlotSpec,
    cache_path,
    render_bars,
    render_box,
    render_imu,
    render_task,
    render_task_cached,
)
from plotbench.synthgen import build_task_matrix, gen_clusters, gen_derivative_task
from plotbench.synthgen import TaskInstance, instance_id_for


def function_instance(seed=0, num_points=50, noise=0.5):
    return build_task_matrix(
        "function_id",
        seed,
        {"repeats": 1, "num_points": (num_points,), "noise_levels": (noise,), "func_types": ("quadratic",)},
    )[0]


def cluster_instance(seed=0):
    return build_task_matrix(
        "cluster_count",
        seed,
        {"repeats": 1, "cluster_stds": (0.05,), "cluster_points": (20,), "cluster_counts": (4,)},
    )[0]


def derivative_instance(seed=0):
    return build_task_matrix(
        "derivative_id",
        seed,
        {"repeats": 1, "num_points": (50,), "noise_levels": (0.5,), "func_types": ("cubic",)},
    )[0]


# --- dimensions ----------------------------------------------------------------


def test_pixel_dimensions_equal_figsize_times_dpi():
    image = render_task(function_instance(), PlotSpec(figsize=(6.4, 4.8), dpi=100))[0]
    assert (image.width_px, image.height_px) == (640, 480)
    decoded = image.pixels()
    assert decoded.shape == (480, 640, 3)


@pytest.mark.parametrize("dpi", ABLATION_DPIS)
def test_all_ablation_dpis(dpi):
    image = render_task(function_instance(), PlotSpec(figsize=(4, 3), dpi=dpi))[0]
    assert (image.width_px, image.height_px) == (4 * dpi, 3 * dpi)
    assert image.pixels().shape == (3 * dpi, 4 * dpi, 3)


def test_default_figsizes_follow_task_comments():
    f = render_task(function_instance())[0]
    assert (f.width_px, f.height_px) == (640, 480)  # (6.4, 4.8) @ 100
    c = render_task(cluster_instance())[0]
    assert (c.width_px, c.height_px) == (768, 768)  # (8, 8) @ 96


# --- determinism ------------------------------------------------------------------


def test_double_render_byte_identity():
    inst = function_instance()
    spec = PlotSpec()
    a = render_task(inst, spec)[0]
    b = render_task(inst, spec)[0]
    assert a.sha256 == b.sha256
    assert a.png_bytes == b.png_bytes


def test_distinct_data_distinct_bytes():
    a = render_task(function_instance(seed=1))[0]
    b = render_task(function_instance(seed=2))[0]
    assert a.sha256 != b.sha256


# --- task-specific rendering -------------------------------------------------------


def test_cluster_points_within_limits():
    # the axes are pinned to [-1, 1]^2 regardless of the data spread
    c = gen_clusters(3, 10, 5, 0.05)
    inst = TaskInstance(
        task_kind="cluster_count", payload=c, ground_truth=5,
        params={"seed": 3}, instance_id=instance_id_for("cluster_count", {"seed": 3}),
    )
    image = render_task(inst, PlotSpec())[0]
    assert image.width_px == 768


def test_derivative_renders_question_plus_four_choices():
    images = render_task(derivative_instance())
    assert len(images) == 5
    assert images[0].role == "question"
    assert [im.role for im in images[1:]] == ["choice_1", "choice_2", "choice_3", "choice_4"]


def test_correlation_single_figure():
    inst = build_task_matrix(
        "correlation",
        0,
        {"repeats": 1, "num_points": (50,), "noise_levels": (0.5,), "slope_pairs": ((1, 2),)},
    )[0]
    images = render_task(inst)
    assert len(images) == 1
    assert (images[0].width_px, images[0].height_px) == (384, 384)  # (4, 4) @ 96


def test_non_finite_rejected():
    inst = function_instance()
    inst.payload.ys[0] = np.nan
    with pytest.raises(RejectedInputError):
        render_task(inst)


# --- components contract ------------------------------------------------------------


def _content_bbox(pixels, bg):
    mask = np.any(pixels != np.asarray(bg, dtype=np.uint8), axis=-1)
    rows = np.where(mask.any(axis=1))[0]
    cols = np.where(mask.any(axis=0))[0]
    return rows.min(), rows.max(), cols.min(), cols.max(), mask


def test_components_none_has_no_chrome():
    inst = function_instance(num_points=5, noise=0.0)
    img_all = render_task(inst, PlotSpec(components="all"))[0]
    img_none = render_task(inst, PlotSpec(components="none", palette="black_white"))[0]
    # bare rendering has strictly less ink than the full one
    dark_all = np.sum(np.any(img_all.pixels() < 128, axis=-1))
    dark_none = np.sum(np.any(img_none.pixels() < 128, axis=-1))
    assert dark_none < dark_all
    # and no ink in the outer border where titles/labels/ticks would live
    px = img_none.pixels()
    border = np.concatenate([px[:2].ravel(), px[-2:].ravel(), px[:, :2].ravel(), px[:, -2:].ravel()])
    assert np.all(border == 255)


def test_components_minimal_between_none_and_all():
    inst = function_instance(num_points=5, noise=0.0)
    sizes = {}
    for comp in ("all", "minimal", "none"):
        img = render_task(inst, PlotSpec(components=comp, palette="black_white"))[0]
        sizes[comp] = np.sum(np.any(img.pixels() < 128, axis=-1))
    assert sizes["none"] < sizes["minimal"] < sizes["all"]


# --- marker-count fidelity -----------------------------------------------------------


def _count_components(mask):
    from scipy import ndimage

    labeled, n = ndimage.label(mask)
    return n


@pytest.mark.parametrize("n_points", [5, 20, 50])
def test_marker_count_matches_num_points(n_points):
    # well-separated grid points, bare render, black on white
    cols = int(np.ceil(np.sqrt(n_points)))
    xs = np.array([(i % cols) for i in range(n_points)], dtype=float)
    ys = np.array([(i // cols) for i in range(n_points)], dtype=float)
    from plotbench.synthgen import Series

    series = Series(
        xs=xs, ys=ys, func_type="linear", noise_level=0.0, num_points=n_points,
        seed=0, noise=np.zeros(n_points), x_range=(0.0, float(cols)),
    )
    inst = TaskInstance(
        task_kind="function_id", payload=series, ground_truth="linear",
        params={"seed": 0}, instance_id="markertest",
    )
    spec = PlotSpec(components="none", palette="black_white", marker_size="large", dpi=100)
    image = render_task(inst, spec)[0]
    mask = np.any(image.pixels() < 128, axis=-1)
    assert _count_components(mask) == n_points


# --- IMU and bars ---------------------------------------------------------------------


def test_render_imu_split_gives_two_images():
    seg = make_segment(0, rate_hz=10.0)
    images = render_imu(seg, split_sensors=True)
    assert len(images) == 2
    assert images[0].role == "accelerometer"
    assert images[1].role == "gyroscope"
    # (4, 4) @ 90 dpi -> 360 px: stays under the 384 px small-image threshold
    assert (images[0].width_px, images[0].height_px) == (360, 360)


def test_render_imu_combined_gives_one_image():
    seg = make_segment(0, rate_hz=10.0)
    images = render_imu(seg, split_sensors=False)
    assert len(images) == 1
    assert (images[0].width_px, images[0].height_px) == (600, 400)  # (6, 4) @ 100


def test_render_imu_rejects_bad_channels():
    seg = make_segment(0, rate_hz=10.0)
    seg.channels = seg.channels[:4]
    with pytest.raises(RejectedInputError):
        render_imu(seg, split_sensors=True)


def test_render_bars_constant_and_validation():
    image = render_bars(np.full(30, 12.0))
    assert image.width_px == 640
    with pytest.raises(RejectedInputError):
        render_bars([])
    with pytest.raises(RejectedInputError):
        render_bars([-1.0, 2.0])
    with pytest.raises(RejectedInputError):
        render_bars(np.ones(61))


def test_render_bars_ramp_strictly_increasing_heights():
    values = np.arange(1, 31, dtype=float) * 10
    image = render_bars(values, PlotSpec(components="none", palette="black_white"))
    px = image.pixels()
    mask = np.any(px < 128, axis=-1)
    cols = np.where(mask.any(axis=0))[0]
    # measure ink height along each bar's column span; heights must step up
    heights = []
    run_start = None
    prev = None
    for c in range(px.shape[1]):
        col_h = mask[:, c].sum()
        if col_h > 0 and prev in (None, 0):
            run_start = c
        if col_h == 0 and prev and run_start is not None:
            heights.append(mask[:, run_start:c].sum(axis=0).max())
            run_start = None
        prev = col_h
    if run_start is not None:
        heights.append(mask[:, run_start:].sum(axis=0).max())
    assert len(heights) == 30
    assert all(b > a for a, b in zip(heights, heights[1:]))


def test_render_box_smoke():
    image = render_box([("a", [1, 2, 3, 4]), ("b", [2, 3, 4, 5])], title="demo", ylabel="metric")
    assert image.width_px == 640
    with pytest.raises(RejectedInputError):
        render_box([], title="x", ylabel="y")


# --- cache -------------------------------------------------------------------------


def test_render_cache_roundtrip(tmp_path):
    inst = function_instance()
    spec = PlotSpec()
    paths = render_task_cached(tmp_path, inst, spec)
    assert len(paths) == 1
    assert paths[0].exists()
    first_bytes = paths[0].read_bytes()
    # second call reuses the file
    again = render_task_cached(tmp_path, inst, spec)
    assert again == paths
    assert paths[0].read_bytes() == first_bytes
    assert cache_path(tmp_path, inst.instance_id, spec, 0) == paths[0]


def test_render_cache_distinct_specs_distinct_paths(tmp_path):
    inst = function_instance()
    a = render_task_cached(tmp_path, inst, PlotSpec(dpi=50))
    b = render_task_cached(tmp_path, inst, PlotSpec(dpi=100))
    assert a != b
