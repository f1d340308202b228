import pytest

from scn.errors import DataError
from scn.services.plot_service import PLOT_FILE, emit_plot, read_metrics, render_loss_curve
from scn.services.training_service import METRICS_HEADER


def _write_metrics(path, rows):
    path.write_text(METRICS_HEADER + "\n" + "".join(r + "\n" for r in rows), encoding="utf-8")
    return path


def test_single_row_renders(tmp_path):
    metrics = _write_metrics(tmp_path / "metrics.csv", ["1,0.5,0.6,0.75,12"])
    out = emit_plot(metrics)
    assert out == tmp_path / PLOT_FILE
    svg = out.read_bytes()
    assert svg.lstrip().startswith(b"<?xml")
    assert b"<svg" in svg


def test_output_is_byte_identical(tmp_path):
    rows = read_metrics(_write_metrics(tmp_path / "metrics.csv", ["1,0.5,0.6,0.75,12", "2,0.4,0.55,0.8,11"]))
    assert render_loss_curve(rows) == render_loss_curve(rows)


def test_nan_test_loss_is_allowed(tmp_path):
    metrics = _write_metrics(tmp_path / "metrics.csv", ["1,0.5,nan,nan,3", "2,0.3,nan,nan,3"])
    out = emit_plot(metrics, tmp_path / "sub" / "curve.svg")
    assert out.is_file()


def test_empty_or_missing_metrics(tmp_path):
    with pytest.raises(DataError, match="no rows"):
        read_metrics(_write_metrics(tmp_path / "metrics.csv", []))
    with pytest.raises(DataError, match="not found"):
        emit_plot(tmp_path / "absent.csv")


def test_axis_padding_covers_the_data():
    from scn.services.plot_service import _padded

    lo, hi = _padded(0.2, 0.9)
    assert lo < 0.2 and hi > 0.9
    lo, hi = _padded(3.0, 3.0)
    assert lo < 3.0 < hi
