import pytest

from figplots.cli import (
    main_energy_box,
    main_energy_line,
    main_region_raster,
    main_trajectory,
)

MAINS = {
    main_region_raster: "raster_s.csv",
    main_trajectory: "aim_trace.csv",
    main_energy_line: "energy_curves.csv",
    main_energy_box: "energy_curves.csv",
}


@pytest.mark.parametrize("entry", list(MAINS))
def test_happy_path(csv_dir, entry, capsys):
    out = csv_dir / "fig.png"
    rc = entry([str(csv_dir / MAINS[entry]), str(out)])
    assert rc == 0
    assert out.exists()
    assert str(out) in capsys.readouterr().out


def test_trajectory_takes_many_csvs(csv_dir):
    out = csv_dir / "multi.png"
    trace = str(csv_dir / "aim_trace.csv")
    assert main_trajectory([trace, trace, str(out)]) == 0
    assert out.exists()


def test_schema_mismatch_exits_1_writes_nothing(csv_dir, capsys):
    empty = csv_dir / "empty.csv"
    empty.write_text("")
    out = csv_dir / "never.png"
    rc = main_energy_box([str(empty), str(out)])
    assert rc == 1
    assert "ERROR:" in capsys.readouterr().err
    assert not out.exists()


def test_wrong_flavor_exits_1(csv_dir):
    rc = main_region_raster([str(csv_dir / "energy_curves.csv"),
                             str(csv_dir / "never.png")])
    assert rc == 1


def test_missing_args_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main_energy_line(["only_one_arg.csv"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_bad_extension_exits_2(csv_dir, capsys):
    with pytest.raises(SystemExit) as exc:
        main_energy_line([str(csv_dir / "energy_curves.csv"),
                          str(csv_dir / "out.gif")])
    assert exc.value.code == 2
    capsys.readouterr()
