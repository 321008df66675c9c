"""Golden-file pins for the CLI output schemas.

If numpy/scipy upgrades shift values in the last ulp, regenerate the fixtures
with the commands embedded in each test (the schema itself must not change).
"""

from pathlib import Path

from trajcert.cli import main

GOLDEN = Path(__file__).parent / "golden"


def test_certify_outputs_match_golden(tmp_path):
    out = tmp_path / "run"
    code = main(["certify", "--synthetic", "3", "--seed", "7", "--sigma", "0.1",
                 "--n", "20", "--out", str(out)])
    assert code == 0
    assert (out / "scenes.jsonl").read_bytes() == \
        (GOLDEN / "certify_scenes.jsonl").read_bytes()
    assert (out / "metrics.json").read_bytes() == \
        (GOLDEN / "certify_metrics.json").read_bytes()


def test_sweep_csv_matches_golden(tmp_path):
    out = tmp_path / "run"
    code = main(["sweep", "--synthetic", "3", "--seed", "7", "--sigmas", "0.1,0.2",
                 "--n", "20", "--out", str(out)])
    assert code == 0
    assert (out / "sweep.csv").read_bytes() == (GOLDEN / "sweep.csv").read_bytes()
