import json
from pathlib import Path

from vlcakit.storage.filesystem import FileSystem, format_cell


def test_write_csv_creates_parent_and_formats_floats(tmp_path: Path) -> None:
    fs = FileSystem()
    path = tmp_path / "nested" / "trace.csv"

    fs.write_csv(str(path), ("t_s", "value", "flag"), [(0.0, 1.0 / 3.0, None), (0.001, float("inf"), True)])

    assert path.read_text(encoding="utf-8").splitlines() == [
        "t_s,value,flag",
        "0,0.3333333333,",
        "0.001,inf,true",
    ]


def test_identical_writes_are_byte_identical(tmp_path: Path) -> None:
    fs = FileSystem()
    rows = [(i * 1e-3, i ** 0.5) for i in range(100)]
    a = fs.write_csv(str(tmp_path / "a.csv"), ("t", "y"), rows)
    b = fs.write_csv(str(tmp_path / "b.csv"), ("t", "y"), rows)

    assert fs.digest(a) == fs.digest(b)


def test_write_json_sorts_keys(tmp_path: Path) -> None:
    fs = FileSystem()
    path = fs.write_json(str(tmp_path / "m.json"), {"b": 1, "a": [1, 2]})

    content = Path(path).read_text(encoding="utf-8")
    assert json.loads(content) == {"a": [1, 2], "b": 1}
    assert content.index('"a"') < content.index('"b"')


def test_read_csv_round_trip(tmp_path: Path) -> None:
    fs = FileSystem()
    path = fs.write_csv(str(tmp_path / "x.csv"), ("name", "v"), [("a", 2.5)])

    assert fs.read_csv(path) == [{"name": "a", "v": "2.5"}]


def test_format_cell_handles_special_values() -> None:
    assert format_cell(None) == ""
    assert format_cell(float("nan")) == "nan"
    assert format_cell(-float("inf")) == "-inf"
    assert format_cell(12) == "12"
    assert format_cell(1234567.891, ".4g") == "1.235e+06"
