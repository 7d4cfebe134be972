import pytest

from figplots.figures import FigureJob, FigureKind, render
from figplots.schema import SchemaError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

KIND_TO_CSV = {
    FigureKind.REGION_RASTER: "raster_s.csv",
    FigureKind.TRAJECTORY: "aim_trace.csv",
    FigureKind.ENERGY_LINE: "energy_curves.csv",
    FigureKind.ENERGY_BOX: "energy_curves.csv",
}


@pytest.mark.parametrize("kind", list(FigureKind))
def test_renders_png(csv_dir, kind):
    out = csv_dir / f"{kind.value}.png"
    got = render(FigureJob((str(csv_dir / KIND_TO_CSV[kind]),), kind, str(out)))
    assert got == str(out)
    data = out.read_bytes()
    assert data.startswith(PNG_MAGIC) and len(data) > 1000


@pytest.mark.parametrize("kind", list(FigureKind))
def test_two_renders_are_byte_identical(csv_dir, kind):
    src = str(csv_dir / KIND_TO_CSV[kind])
    a, b = csv_dir / "a.png", csv_dir / "b.png"
    render(FigureJob((src,), kind, str(a)))
    render(FigureJob((src,), kind, str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_svg_output_has_no_date(csv_dir):
    out = csv_dir / "curve.svg"
    render(FigureJob((str(csv_dir / "energy_curves.csv"),), FigureKind.ENERGY_LINE,
                     str(out)))
    text = out.read_text()
    assert text.lstrip().startswith("<?xml")
    assert "dc:date" not in text


def test_raster_renders_kappa_flavor(csv_dir):
    out = csv_dir / "t.png"
    render(FigureJob((str(csv_dir / "raster_t.csv"),), FigureKind.REGION_RASTER,
                     str(out)))
    assert out.read_bytes().startswith(PNG_MAGIC)


def test_trajectory_overlays_multiple_traces(csv_dir):
    second = csv_dir / "trace2.csv"
    second.write_text((csv_dir / "aim_trace.csv").read_text())
    out = csv_dir / "multi.png"
    render(FigureJob((str(csv_dir / "aim_trace.csv"), str(second)),
                     FigureKind.TRAJECTORY, str(out)))
    assert out.read_bytes().startswith(PNG_MAGIC)


def test_schema_error_writes_no_file(csv_dir):
    bad = csv_dir / "bad.csv"
    bad.write_text("layer,mean\n")
    out = csv_dir / "never.png"
    with pytest.raises(SchemaError):
        render(FigureJob((str(bad),), FigureKind.ENERGY_BOX, str(out)))
    assert not out.exists()


def test_incomplete_raster_grid_rejected(csv_dir):
    holes = csv_dir / "holes.csv"
    lines = (csv_dir / "raster_s.csv").read_text().splitlines()
    holes.write_text("\n".join(lines[:-1]) + "\n")
    out = csv_dir / "never2.png"
    with pytest.raises(SchemaError, match="grid"):
        render(FigureJob((str(holes),), FigureKind.REGION_RASTER, str(out)))
    assert not out.exists()


def test_wrong_kind_csv_rejected(csv_dir):
    with pytest.raises(SchemaError, match="header"):
        render(FigureJob((str(csv_dir / "raster_s.csv"),), FigureKind.ENERGY_BOX,
                         str(csv_dir / "never3.png")))


def test_job_validation():
    with pytest.raises(ValueError, match="kind"):
        FigureJob(("a.csv",), "energy_box", "out.png")
    with pytest.raises(ValueError, match="exactly one"):
        FigureJob(("a.csv", "b.csv"), FigureKind.ENERGY_BOX, "out.png")
    with pytest.raises(ValueError, match="at least one"):
        FigureJob((), FigureKind.TRAJECTORY, "out.png")
    job = FigureJob("single.csv", FigureKind.ENERGY_LINE, "out.png")
    assert job.inputs == ("single.csv",)


def test_unsupported_format_rejected_before_writing(csv_dir):
    with pytest.raises(ValueError, match="format"):
        render(FigureJob((str(csv_dir / "energy_curves.csv"),),
                         FigureKind.ENERGY_LINE, str(csv_dir / "out.pdf")))
    assert not (csv_dir / "out.pdf").exists()
