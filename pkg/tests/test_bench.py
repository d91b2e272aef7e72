import csv
import io

from foolkit import bench


def test_lap_and_fft_rows_match_reference():
    rows = list(bench.bench_lap(sizes=(32,))) + list(bench.bench_fft(cycles=(3,), workers=(1, 2)))
    assert rows and all(r["matches_reference"] for r in rows)
    assert all(set(r) == set(bench.FIELDS) for r in rows)


def test_fool_and_gb_small(capsys):
    rows = list(bench.bench_fool(sizes=(4,), workers=(1, 2))) + list(bench.bench_gb(sizes=(8,), workers=(1, 2)))
    assert all(r["matches_reference"] for r in rows)


def test_main_writes_csv(tmp_path):
    out = tmp_path / "b.csv"
    assert bench.main(["--suite", "lap", "--output", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert rows and rows[0]["suite"] == "lap"
