import statistics

from cactus.bench import BenchConfig, CAMERA_ROWS, VIEWER_ROWS, bench_run


def small_config(**kw):
    defaults = dict(
        frames=200,
        frame_bytes=1024,
        frame_rate=10,
        block_size_n=10,
        depth=16,
        epoch_seconds=1,
        storage_url="mem://t",
    )
    defaults.update(kw)
    return BenchConfig(**defaults)


def test_report_has_all_ten_rows():
    report = bench_run(small_config())
    assert report.row_names() == [("camera", op) for op in CAMERA_ROWS] + [
        ("viewer", op) for op in VIEWER_ROWS
    ]
    for row in report.row_names():
        assert report.rows[row], row


def test_boundary_key_extraction_dwarfs_in_epoch():
    # epoch_seconds=1 at 10 fps: a derivation every 10th frame, cache hits
    # in between
    report = bench_run(small_config())
    samples = report.rows[("camera", "Key Extraction")]
    boundary = samples[::10]
    within = [s for i, s in enumerate(samples) if i % 10]
    assert statistics.fmean(boundary) > 10 * statistics.fmean(within)


def test_zero_and_random_frames_both_measured():
    for zero in (False, True):
        report = bench_run(small_config(frames=50, zero_frames=zero))
        assert report.rows[("camera", "Frame Encryption")]
        assert report.mean("camera", "Frame Encryption") > 0


def test_render_is_table_shaped():
    text = bench_run(small_config(frames=50)).render()
    lines = text.splitlines()
    assert len(lines) == 2 + 10
    assert "Key Extraction" in text and "Signature Verification" in text
