import json
import shutil
import subprocess

import numpy as np
import pytest

from mmhet import (
    MMParams,
    ReportDocument,
    SingleScenario,
    emit_report,
    fit_block,
    fit_single,
    generate_single,
    ingest_csv,
    mm_mean,
    screen_models,
    VarianceSpec,
)
from mmhet.cli import EXIT_DATA, EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE, cli_dispatch
from mmhet.dataio import IngestOptions
from mmhet.exceptions import EmptyAfterFiltering, MissingColumn, ParseError
from mmhet.report import FIT_CSV_COLUMNS, METRIC_CSV_COLUMNS, screen_blocks

TRUTH = MMParams(100.0, 20.0)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _curve_csv(tmp_path, name="curve.csv", noise=0.0, n=30, seed=5, extra_cols=None):
    rng = np.random.default_rng(seed)
    s = np.geomspace(1.0, 150.0, n)
    y = mm_mean(s, TRUTH) + (rng.normal(0.0, noise, n) if noise else 0.0)
    lines = ["substrate,velocity" if extra_cols is None else "substrate,velocity," + ",".join(extra_cols)]
    for i, (si, yi) in enumerate(zip(s, y)):
        row = f"{float(si)!r},{float(yi)!r}"
        if extra_cols is not None:
            row += "," + ",".join(c + str(i % 3) for c in extra_cols)
        lines.append(row)
    return _write(tmp_path, name, "\n".join(lines) + "\n")


# --- ingestion ------------------------------------------------------------------


def test_ingest_two_row_file(tmp_path):
    path = _write(tmp_path, "a.csv", "substrate,velocity\n10,4\n10,6\n")
    table = ingest_csv(path)
    assert table.rows_in == 2 and table.rows_out == 2
    assert table.group is None and table.cluster is None
    assert np.array_equal(table.substrate, [10.0, 10.0])
    assert np.array_equal(table.velocity, [4.0, 6.0])
    assert table.dropped == {"sentinel": 0, "nonfinite": 0}
    ds = table.to_dataset()
    assert ds.n == 2


def test_ingest_drops_sentinel_rows(tmp_path):
    path = _write(
        tmp_path,
        "a.csv",
        "substrate,velocity\n10,4\n20,-9999\n-9999,5\n30,6\n",
    )
    table = ingest_csv(path)
    assert table.dropped["sentinel"] == 2
    assert table.rows_in == table.rows_out + sum(table.dropped.values())
    assert np.array_equal(table.substrate, [10.0, 30.0])


def test_ingest_drops_nonfinite_rows(tmp_path):
    path = _write(
        tmp_path, "a.csv", "substrate,velocity\n10,nan\n20,inf\n30,6\n"
    )
    table = ingest_csv(path)
    assert table.dropped["nonfinite"] == 2
    assert table.rows_out == 1


def test_ingest_cluster_labels(tmp_path):
    path = _write(
        tmp_path,
        "a.csv",
        "substrate,velocity,cluster\n1,2,b\n2,3,a\n3,4,b\n4,5,c\n",
    )
    table = ingest_csv(path)
    clustered = table.to_clustered()
    # first-appearance order
    assert clustered.cluster_ids == ("b", "a", "c")
    assert [c.n for c in clustered.clusters] == [2, 1, 1]


def test_ingest_group_panel_order(tmp_path):
    path = _write(
        tmp_path,
        "a.csv",
        "substrate,velocity,group\n1,2,x\n2,3,y\n3,4,x\n",
    )
    panel = ingest_csv(path).group_panel()
    assert list(panel) == ["x", "y"]
    assert panel["x"].n == 2 and panel["y"].n == 1


def test_ingest_missing_optional_columns(tmp_path):
    path = _write(tmp_path, "a.csv", "substrate,velocity\n1,2\n")
    table = ingest_csv(path)
    with pytest.raises(MissingColumn):
        table.to_clustered()
    with pytest.raises(MissingColumn):
        table.group_panel()


def test_ingest_custom_names_and_delimiter(tmp_path):
    path = _write(tmp_path, "a.csv", "conc;rate\n1;2\n3;4\n")
    table = ingest_csv(
        path,
        IngestOptions(substrate_col="conc", velocity_col="rate", delimiter=";"),
    )
    assert table.rows_out == 2


def test_ingest_blank_lines_skipped(tmp_path):
    path = _write(tmp_path, "a.csv", "substrate,velocity\n1,2\n\n , \n3,4\n")
    table = ingest_csv(path)
    assert table.rows_in == 2 and table.rows_out == 2


def test_ingest_errors(tmp_path):
    with pytest.raises(MissingColumn):
        ingest_csv(_write(tmp_path, "m.csv", "conc,velocity\n1,2\n"))
    with pytest.raises(EmptyAfterFiltering):
        ingest_csv(_write(tmp_path, "e.csv", ""))
    with pytest.raises(EmptyAfterFiltering):
        ingest_csv(_write(tmp_path, "s.csv", "substrate,velocity\n1,-9999\n"))
    with pytest.raises(ParseError) as excinfo:
        ingest_csv(_write(tmp_path, "p.csv", "substrate,velocity\n1,2\nx,3\n"))
    assert excinfo.value.line == 3
    assert "line 3" in str(excinfo.value)
    with pytest.raises(ParseError) as excinfo:
        ingest_csv(_write(tmp_path, "w.csv", "substrate,velocity\n1\n"))
    assert excinfo.value.line == 2


# --- report serialization ---------------------------------------------------------


def _screen_doc(rng):
    s = np.geomspace(1.0, 150.0, 40)
    y = mm_mean(s, TRUTH) + rng.normal(0.0, 1.0, 40) * (s ** 0.25)
    from mmhet import Dataset

    data = Dataset(s=s, y=y)
    entries = screen_models(data)
    doc = ReportDocument(kind="screen", input_digest="0" * 64)
    doc.fits = screen_blocks(None, entries, data=data)
    return doc, entries


def test_json_round_trip(rng):
    doc, _ = _screen_doc(rng)
    parsed = json.loads(emit_report(doc, "json").decode("utf-8"))
    assert parsed == doc.to_dict()


def test_json_floats_survive_exactly(rng):
    doc, entries = _screen_doc(rng)
    parsed = json.loads(emit_report(doc, "json").decode("utf-8"))
    best = entries[0].result
    got = next(b for b in parsed["fits"] if b["rank"] == 1)
    assert got["vmax"] == best.params.vmax  # exact, not approx
    assert got["km"] == best.params.km
    assert got["aic"] == best.aic


def test_csv_layout(rng):
    doc, entries = _screen_doc(rng)
    text = emit_report(doc, "csv").decode("utf-8")
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(FIT_CSV_COLUMNS)
    assert len(lines) == 1 + len(entries)
    first = lines[1].split(",")
    assert first[0] == "fit"
    # numeric cells round-trip through repr
    vmax_col = FIT_CSV_COLUMNS.index("vmax")
    assert float(first[vmax_col]) == entries[0].result.params.vmax


def test_text_report_ranks_ascending(rng):
    # one body line per candidate model, ordered by ascending AIC
    doc, entries = _screen_doc(rng)
    text = emit_report(doc, "text").decode("utf-8")
    labels = {e.spec.label() for e in entries}
    models_in_order = []
    for ln in text.split("\n"):
        parts = ln.split()
        if len(parts) > 2 and parts[0] == "-" and parts[1] in labels:
            models_in_order.append(parts[1])
    assert models_in_order == [e.spec.label() for e in entries]
    fitted = [e for e in entries if e.error is None]
    aics = [e.result.aic for e in fitted]
    assert aics == sorted(aics)
    assert text.startswith("mmhet report (screen)")


def test_emit_report_rejects_unknown_format(rng):
    doc, _ = _screen_doc(rng)
    with pytest.raises(ValueError):
        emit_report(doc, "yaml")


def test_fit_block_failure_shape():
    block = fit_block("lbl", None, error="boom")
    assert block["model"] is None
    assert block["converged"] is False
    assert block["error"] == "boom"


# --- CLI ---------------------------------------------------------------------------


def test_cli_fit_noiseless_json(tmp_path):
    csv_path = _curve_csv(tmp_path)
    out = tmp_path / "fit.json"
    code = cli_dispatch(
        [
            "fit",
            "--input",
            csv_path,
            "--variance",
            "pow:0.5",
            "--format",
            "json",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    block = doc["fits"][0]
    assert block["vmax"] == pytest.approx(100.0, abs=1e-6)
    assert block["km"] == pytest.approx(20.0, abs=1e-6)
    assert block["model"] == "pow:0.5"
    assert doc["ingest"]["rows_in"] == 30
    assert "curve" in block and len(block["curve"]["s"]) == 101


def test_cli_fit_with_bootstrap(tmp_path):
    csv_path = _curve_csv(tmp_path, noise=1.5)
    out = tmp_path / "fit.json"
    code = cli_dispatch(
        [
            "fit",
            "--input",
            csv_path,
            "--variance",
            "constant",
            "--bootstrap",
            "149",
            "--seed",
            "9",
            "--format",
            "json",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    block = json.loads(out.read_text())["fits"][0]
    bs = block["bootstrap"]
    assert bs["replicates_used"] + bs["failures"] == 149
    assert bs["ci_vmax"][0] < block["vmax"] < bs["ci_vmax"][1]


def test_cli_usage_errors(tmp_path):
    csv_path = _curve_csv(tmp_path)
    # unknown variance spec value
    assert (
        cli_dispatch(["fit", "--input", csv_path, "--variance", "gauss"])
        == EXIT_USAGE
    )
    # missing required flag
    assert cli_dispatch(["fit", "--input", csv_path]) == EXIT_USAGE
    # unknown subcommand
    assert cli_dispatch(["transmogrify"]) == EXIT_USAGE


def test_cli_data_errors(tmp_path):
    assert (
        cli_dispatch(
            ["fit", "--input", str(tmp_path / "nope.csv"), "--variance", "constant"]
        )
        == EXIT_DATA
    )
    bad = _write(tmp_path, "bad.csv", "substrate,velocity\nx,y\n")
    assert cli_dispatch(["fit", "--input", bad, "--variance", "constant"]) == EXIT_DATA


def test_cli_nonconverged_still_writes_report(tmp_path):
    flat = _write(tmp_path, "flat.csv", "substrate,velocity\n1,1\n2,1\n4,1\n8,1\n")
    out = tmp_path / "flat.json"
    code = cli_dispatch(
        [
            "fit",
            "--input",
            flat,
            "--variance",
            "constant",
            "--format",
            "json",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_NONCONVERGED
    doc = json.loads(out.read_text())
    block = doc["fits"][0]
    assert block["error"]
    assert block["solver"]["used_root"] is False
    assert np.isfinite(block["vmax"])


def test_cli_screen_and_group(tmp_path, rng):
    # screen: ranked JSON report
    s = np.geomspace(1.0, 150.0, 40)
    y = mm_mean(s, TRUTH) + rng.normal(0.0, 1.0, 40)
    rows = ["substrate,velocity,group"]
    rows += [f"{float(si)!r},{float(yi)!r},g{i % 2}" for i, (si, yi) in enumerate(zip(s, y))]
    path = _write(tmp_path, "panel.csv", "\n".join(rows) + "\n")

    out = tmp_path / "screen.json"
    assert (
        cli_dispatch(
            ["screen", "--input", path, "--format", "json", "--out", str(out)]
        )
        == EXIT_OK
    )
    fits = json.loads(out.read_text())["fits"]
    ranked = [b for b in fits if b["rank"] is not None]
    assert [b["rank"] for b in ranked] == list(range(1, len(ranked) + 1))
    aics = [b["aic"] for b in ranked]
    assert aics == sorted(aics)

    out2 = tmp_path / "group.json"
    assert (
        cli_dispatch(
            ["group", "--input", path, "--format", "json", "--out", str(out2)]
        )
        == EXIT_OK
    )
    doc = json.loads(out2.read_text())
    assert set(doc["panel"]["best_by_label"]) == {"g0", "g1"}
    assert doc["panel"]["summary"]


def test_cli_cluster(tmp_path, rng):
    s = np.geomspace(2.0, 120.0, 12)
    rows = ["substrate,velocity,cluster"]
    for c in range(4):
        shift = rng.normal(0.0, 3.0)
        y = (TRUTH.vmax + shift) * s / (TRUTH.km + s) + rng.normal(0.0, 1.5, s.size)
        rows += [f"{float(si)!r},{float(yi)!r},c{c}" for si, yi in zip(s, y)]
    path = _write(tmp_path, "clusters.csv", "\n".join(rows) + "\n")
    out = tmp_path / "cluster.json"
    code = cli_dispatch(
        [
            "cluster",
            "--input",
            path,
            "--variance",
            "pow:0.5",
            "--format",
            "json",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    block = json.loads(out.read_text())["fits"][0]
    assert "tau2" in block
    assert block["converged"] is True
    assert block["vmax"] == pytest.approx(100.0, rel=0.2)


def test_cli_simulate_round_trips(tmp_path):
    out = tmp_path / "sim.csv"
    code = cli_dispatch(
        [
            "simulate",
            "--scenario",
            "hill",
            "--n",
            "25",
            "--seed",
            "17",
            "--replicate",
            "2",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    table = ingest_csv(out)
    want = generate_single(
        SingleScenario(shape="hill", n=25, replications=3, master_seed=17), 2
    )
    assert np.array_equal(table.substrate, want.s)
    assert np.array_equal(table.velocity, want.y)  # repr round-trip is exact


def test_cli_benchmark_byte_identical(tmp_path):
    args = [
        "benchmark",
        "--suite",
        "single",
        "--replications",
        "8",
        "--seed",
        "7",
    ]
    outs = []
    for tag in ("one", "two"):
        stem = tmp_path / tag
        assert cli_dispatch(args + ["--out", str(stem)]) == EXIT_OK
        outs.append((stem.with_suffix(".json").read_bytes(), stem.with_suffix(".csv").read_bytes()))
    assert outs[0] == outs[1]
    header = outs[0][1].decode("utf-8").split("\n")[0]
    assert header == ",".join(METRIC_CSV_COLUMNS)
    doc = json.loads(outs[0][0].decode("utf-8"))
    assert doc["benchmark"]["suite"] == "single"
    assert {row["scenario"] for row in doc["benchmark"]["rows"]} == {"mm", "exp", "hill"}
    # timing excluded from the canonical document
    assert all(row["mean_runtime_s"] is None for row in doc["benchmark"]["rows"])


def test_cli_benchmark_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MM_INFER_THREADS", "not-a-number")
    code = cli_dispatch(
        [
            "benchmark",
            "--suite",
            "single",
            "--replications",
            "2",
            "--seed",
            "1",
            "--out",
            str(tmp_path / "x"),
        ]
    )
    assert code == EXIT_USAGE

    monkeypatch.setenv("MM_INFER_THREADS", "2")
    stem_env = tmp_path / "env"
    assert (
        cli_dispatch(
            [
                "benchmark",
                "--suite",
                "single",
                "--replications",
                "6",
                "--seed",
                "3",
                "--out",
                str(stem_env),
            ]
        )
        == EXIT_OK
    )
    monkeypatch.delenv("MM_INFER_THREADS")
    stem_serial = tmp_path / "serial"
    assert (
        cli_dispatch(
            [
                "benchmark",
                "--suite",
                "single",
                "--replications",
                "6",
                "--seed",
                "3",
                "--out",
                str(stem_serial),
            ]
        )
        == EXIT_OK
    )
    assert (
        stem_env.with_suffix(".json").read_bytes()
        == stem_serial.with_suffix(".json").read_bytes()
    )


def test_cli_screen_recovers_generative_shape(tmp_path):
    # sqrt(s)-shaped noise should put pow:0.5 at rank 1 in at least 90 of
    # 100 seeded runs of the full ingest -> screen -> report pipeline.
    s = np.repeat(np.geomspace(0.5, 2000.0, 40), 6)
    wins = 0
    out = tmp_path / "screen.json"
    for p in range(100):
        rng = np.random.default_rng((97, 1, p))
        y = mm_mean(s, TRUTH) + rng.normal(0.0, 1.0, s.size) * np.sqrt(4.0 * np.sqrt(s))
        rows = ["substrate,velocity"]
        rows += [f"{float(si)!r},{float(yi)!r}" for si, yi in zip(s, y)]
        path = _write(tmp_path, "screen_in.csv", "\n".join(rows) + "\n")
        assert (
            cli_dispatch(
                ["screen", "--input", path, "--format", "json", "--out", str(out)]
            )
            == EXIT_OK
        )
        fits = json.loads(out.read_text())["fits"]
        best = next(b for b in fits if b["rank"] == 1)
        wins += best["model"] == "pow:0.5"
    assert wins >= 90


def test_console_entry_point(tmp_path):
    exe = shutil.which("mmhet")
    assert exe is not None, "console script not installed"
    csv_path = _curve_csv(tmp_path)
    proc = subprocess.run(
        [exe, "fit", "--input", csv_path, "--variance", "constant", "--format", "json"],
        capture_output=True,
        timeout=120,
    )
    assert proc.returncode == 0
    doc = json.loads(proc.stdout.decode("utf-8"))
    assert doc["fits"][0]["vmax"] == pytest.approx(100.0, abs=1e-6)
