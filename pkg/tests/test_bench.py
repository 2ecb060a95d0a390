import json

import jsonschema
import numpy as np
import pytest
import yaml

from oodbench import (
    AVERAGE_LABEL,
    ConfigError,
    DEFAULT_K_SWEEP,
    Detector,
    EmbeddingSet,
    LogitSet,
    REPORT_SCHEMA,
    RunConfig,
    Verdict,
    build_index,
    calibrate_thresholds,
    emit_report,
    knn_score_values,
    load_benchmark,
    make_synthetic,
    msp_score_values,
    plot_data_csv,
    render,
    render_csv,
    render_json,
    render_markdown,
    run_benchmark,
    score_samples,
    sweep_k,
    write_embedding_file,
    write_logit_file,
)


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    manifest = make_synthetic(out, seed=0, dim=16, classes=5, n_train=300,
                              n_id=80, n_ood=60, n_sets=4)
    return manifest


@pytest.fixture(scope="module")
def split_manifest(tmp_path_factory):
    """Handcrafted benchmark: KNN separates perfectly, MSP is blind.

    ID and OOD logits are the same matrix, so MSP lands at AUROC 0.5 exactly
    while the embedding geometry (clusters at +e0 vs -e0) gives KNN 1.0.
    """
    out = tmp_path_factory.mktemp("split")
    rng = np.random.default_rng(7)

    def cloud(n, sign, prefix):
        vectors = rng.normal(0.0, 0.01, (n, 4))
        vectors[:, 0] += sign * 1.0
        return EmbeddingSet(vectors, tuple(f"{prefix}{i}" for i in range(n)))

    train = cloud(40, +1, "tr")
    id_test = cloud(10, +1, "id")
    ood = cloud(10, -1, "ood")
    logits = rng.standard_normal((10, 3))
    write_embedding_file(train, out / "train.oodb")
    write_embedding_file(id_test, out / "id.oodb")
    write_embedding_file(ood, out / "ood.oodb")
    write_logit_file(LogitSet(logits, id_test.ids), out / "id_logits.oodb")
    write_logit_file(LogitSet(logits, ood.ids), out / "ood_logits.oodb")
    manifest = out / "manifest.yaml"
    manifest.write_text(yaml.safe_dump({
        "id_train": "train.oodb",
        "id_test": {"embeddings": "id.oodb", "logits": "id_logits.oodb"},
        "ood_sets": [{"name": "flip", "embeddings": "ood.oodb",
                      "logits": "ood_logits.oodb"}],
    }))
    return manifest


def test_run_config_defaults(synthetic):
    config = RunConfig(manifest=synthetic)
    assert config.k == 5
    assert config.k_sweep == (1, 2, 5, 10, 20, 50, 100, 200)
    assert config.k_sweep == DEFAULT_K_SWEEP
    assert config.target_tpr == 0.95
    assert config.detectors == (Detector.KNN, Detector.MSP)
    assert config.out_format == "markdown"


def test_make_synthetic_loadable(synthetic):
    manifest, data = load_benchmark(synthetic)
    assert data.train.count == 300 and data.train.dim == 16
    assert data.id_test.count == 80
    assert [s.name for s in data.ood] == ["ood_1", "ood_2", "ood_3", "ood_4"]
    assert all(s.embeddings.count == 60 for s in data.ood)
    assert data.id_test_logits.classes == 5
    assert manifest.metadata["source"] == "synthetic"


def test_run_benchmark_shape_and_separation(synthetic):
    report = run_benchmark(RunConfig(manifest=synthetic))
    assert report.kind == "eval"
    assert report.detectors == ("knn", "msp")
    assert len(report.rows) == 8
    for name in report.set_names:
        row = report.rows[("knn", name)]
        assert row.n_id == 80 and row.n_ood == 60
        assert row.auroc > 0.9
        assert 0.0 <= row.fpr_at_target <= 0.25


def test_split_benchmark_values(split_manifest):
    report = run_benchmark(RunConfig(manifest=split_manifest, k=3))
    knn_row = report.rows[("knn", "flip")]
    msp_row = report.rows[("msp", "flip")]
    assert knn_row.auroc == 1.0
    assert knn_row.fpr_at_target == 0.0
    assert msp_row.auroc == 0.5
    assert msp_row.fpr_at_target == 1.0


def test_zero_ood_sets(tmp_path):
    rng = np.random.default_rng(3)
    es = EmbeddingSet(rng.standard_normal((20, 4)), tuple(f"r{i}" for i in range(20)))
    write_embedding_file(es, tmp_path / "train.oodb")
    write_embedding_file(es, tmp_path / "id.oodb")
    manifest = tmp_path / "m.yaml"
    manifest.write_text(yaml.safe_dump({
        "id_train": "train.oodb",
        "id_test": {"embeddings": "id.oodb"},
        "ood_sets": [],
    }))
    report = run_benchmark(RunConfig(manifest=manifest, detectors=(Detector.KNN,)))
    assert report.rows == {}
    assert "No OOD sets" in render_markdown(report)
    assert render_csv(report).count("\n") == 1


def test_msp_requires_logits(tmp_path):
    manifest = make_synthetic(tmp_path, seed=1, dim=8, n_train=50, n_id=20,
                              n_ood=20, n_sets=1, with_logits=False)
    with pytest.raises(ConfigError, match="logit"):
        run_benchmark(RunConfig(manifest=manifest))
    # knn alone is fine
    report = run_benchmark(RunConfig(manifest=manifest, detectors=(Detector.KNN,)))
    assert report.detectors == ("knn",)


def test_k_out_of_range(synthetic):
    with pytest.raises(ConfigError, match="301"):
        run_benchmark(RunConfig(manifest=synthetic, k=301))
    with pytest.raises(ConfigError):
        run_benchmark(RunConfig(manifest=synthetic, k=0))
    with pytest.raises(ConfigError, match="301"):
        sweep_k(RunConfig(manifest=synthetic, k_sweep=(1, 301)))
    with pytest.raises(ConfigError):
        sweep_k(RunConfig(manifest=synthetic, k_sweep=()))


def test_bad_thread_count(synthetic):
    with pytest.raises(ConfigError):
        run_benchmark(RunConfig(manifest=synthetic, threads=0))


def test_no_detectors(synthetic):
    with pytest.raises(ConfigError):
        run_benchmark(RunConfig(manifest=synthetic, detectors=()))


def test_sweep_row_matches_single_k(synthetic):
    sweep = sweep_k(RunConfig(manifest=synthetic, k_sweep=(1, 2, 5)))
    single = run_benchmark(RunConfig(manifest=synthetic, k=5,
                                     detectors=(Detector.KNN,)))
    assert sweep.kind == "sweep"
    assert sweep.sweep_ks == (1, 2, 5)
    for name in sweep.set_names:
        assert sweep.sweep[(5, name)] == single.rows[("knn", name)]


def test_sweep_average_is_row_mean(synthetic):
    report = sweep_k(RunConfig(manifest=synthetic, k_sweep=(1, 5, 20)))
    for k in report.sweep_ks:
        aurocs = [report.sweep[(k, n)].auroc for n in report.set_names]
        fprs = [report.sweep[(k, n)].fpr_at_target for n in report.set_names]
        assert abs(report.sweep_avg[k]["auroc"] - sum(aurocs) / 4) < 1e-12
        assert abs(report.sweep_avg[k]["fpr_at_target"] - sum(fprs) / 4) < 1e-12


def test_sweep_k_endpoints(split_manifest):
    # k all the way up to the training count still works
    report = sweep_k(RunConfig(manifest=split_manifest, k_sweep=(1, 40)))
    assert (40, "flip") in report.sweep
    lone = sweep_k(RunConfig(manifest=split_manifest, k_sweep=(2,)))
    assert lone.sweep_ks == (2,)


def test_calibrate_thresholds(synthetic):
    _, data = load_benchmark(synthetic)
    thresholds = calibrate_thresholds(data, (Detector.KNN, Detector.MSP), k=5)
    assert set(thresholds) == {Detector.KNN, Detector.MSP}
    index = build_index(data.train)
    for det, values in (
        (Detector.KNN, knn_score_values(index, data.id_test.vectors, 5)),
        (Detector.MSP, msp_score_values(data.id_test_logits.logits)),
    ):
        th = thresholds[det]
        assert th.detector is det
        assert th.calibration_size == 80
        assert np.mean(values <= th.value) >= 0.95


def test_calibrate_thresholds_errors(tmp_path):
    manifest = make_synthetic(tmp_path, seed=2, dim=8, n_train=30, n_id=10,
                              n_ood=10, n_sets=1, with_logits=False)
    _, data = load_benchmark(manifest)
    with pytest.raises(ConfigError):
        calibrate_thresholds(data, (Detector.MSP,))
    with pytest.raises(ConfigError):
        calibrate_thresholds(data, (Detector.KNN,), k=31)


def test_score_samples_verdicts(synthetic):
    _, data = load_benchmark(synthetic)
    index = build_index(data.train)
    thresholds = calibrate_thresholds(data, (Detector.KNN, Detector.MSP),
                                      k=1, index=index)

    # training rows themselves: distance 0, clearly ID
    probe = EmbeddingSet(data.train.vectors[:3], data.train.ids[:3])
    uniform = LogitSet(np.zeros((3, 5)), probe.ids)
    rows = score_samples(data, probe, uniform, (Detector.KNN, Detector.MSP),
                         thresholds, k=1, index=index)
    assert len(rows) == 6
    by_det = {(r["sample_id"], r["detector"]): r for r in rows}
    for i in range(3):
        knn_row = by_det[(data.train.ids[i], "knn")]
        assert knn_row["score"] == pytest.approx(0.0, abs=1e-12)
        assert knn_row["verdict"] == Verdict.ID.value
        # uniform softmax is maximally uncertain: above any sane threshold
        msp_row = by_det[(data.train.ids[i], "msp")]
        assert msp_row["score"] == -1.0 / 5.0
        assert msp_row["verdict"] == Verdict.OOD.value
        assert msp_row["threshold"] == thresholds[Detector.MSP].value


def test_score_samples_errors(synthetic):
    _, data = load_benchmark(synthetic)
    probe = EmbeddingSet(data.train.vectors[:2], data.train.ids[:2])
    thresholds = calibrate_thresholds(data, (Detector.KNN,), k=1)
    with pytest.raises(ConfigError, match="msp"):
        score_samples(data, probe, None, (Detector.MSP,), thresholds, k=1)
    with pytest.raises(ConfigError, match="calibration"):
        score_samples(data, probe, None, (Detector.MSP,),
                      {Detector.KNN: thresholds[Detector.KNN]}, k=1)


def test_reports_deterministic(synthetic):
    a = run_benchmark(RunConfig(manifest=synthetic))
    b = run_benchmark(RunConfig(manifest=synthetic))
    assert render_csv(a) == render_csv(b)
    sa = sweep_k(RunConfig(manifest=synthetic, k_sweep=(1, 5)))
    sb = sweep_k(RunConfig(manifest=synthetic, k_sweep=(1, 5)))
    assert render_json(sa) == render_json(sb)


def test_csv_round_trips_full_precision(synthetic):
    report = run_benchmark(RunConfig(manifest=synthetic))
    lines = render_csv(report).splitlines()
    assert lines[0] == "detector,ood_set,auroc,fpr_at_target,target_tpr,n_id,n_ood"
    assert len(lines) == 9
    for line in lines[1:]:
        det, name, auroc_s, fpr_s, tpr_s, n_id, n_ood = line.split(",")
        row = report.rows[(det, name)]
        assert float(auroc_s) == row.auroc
        assert float(fpr_s) == row.fpr_at_target
        assert float(tpr_s) == row.target_tpr
        assert int(n_id) == row.n_id and int(n_ood) == row.n_ood


def test_sweep_csv_has_average_rows(synthetic):
    report = sweep_k(RunConfig(manifest=synthetic, k_sweep=(1, 5)))
    lines = render_csv(report).splitlines()
    avg_lines = [l for l in lines if AVERAGE_LABEL in l]
    assert len(avg_lines) == 2
    k, label, auroc_s, fpr_s, tpr_s, n_id, n_ood = avg_lines[0].split(",")
    assert (k, label) == ("1", AVERAGE_LABEL)
    assert float(auroc_s) == report.sweep_avg[1]["auroc"]
    assert (n_id, n_ood) == ("", "")


def test_json_matches_schema(synthetic):
    eval_doc = json.loads(render_json(run_benchmark(RunConfig(manifest=synthetic))))
    jsonschema.validate(eval_doc, REPORT_SCHEMA)
    assert eval_doc["kind"] == "eval"
    assert len(eval_doc["eval"]) == 8
    sweep_doc = json.loads(render_json(sweep_k(RunConfig(manifest=synthetic,
                                                         k_sweep=(1, 5)))))
    jsonschema.validate(sweep_doc, REPORT_SCHEMA)
    assert [row["k"] for row in sweep_doc["sweep_average"]] == [1, 5]


def test_markdown_bolds_best_cell(split_manifest):
    report = run_benchmark(RunConfig(manifest=split_manifest, k=3))
    text = render_markdown(report)
    knn_auroc_line = next(l for l in text.splitlines()
                          if l.startswith("| knn | AUROC"))
    msp_auroc_line = next(l for l in text.splitlines()
                          if l.startswith("| msp | AUROC"))
    assert "**100.00**" in knn_auroc_line
    assert "50.00" in msp_auroc_line and "**" not in msp_auroc_line
    knn_fpr_line = next(l for l in text.splitlines() if l.startswith("| knn | FPR"))
    assert "**0.00**" in knn_fpr_line
    assert "FPR@95.00%TPR" in text


def test_render_aliases_and_unknown(synthetic):
    report = run_benchmark(RunConfig(manifest=synthetic))
    assert render(report, "md") == render(report, "markdown")
    assert render(report, "CSV") == render_csv(report)
    with pytest.raises(ConfigError):
        render(report, "pdf")


def test_emit_report_files(tmp_path, synthetic):
    sweep = sweep_k(RunConfig(manifest=synthetic, k_sweep=(1, 5)))
    out = tmp_path / "sweep.csv"
    text = emit_report(sweep, "csv", out)
    assert out.read_text() == text
    companion = tmp_path / "sweep.csv.plotdata.csv"
    plot = companion.read_text()
    assert plot == plot_data_csv(sweep)
    assert plot.splitlines()[0] == "k,avg_fpr"
    assert len(plot.splitlines()) == 3

    eval_out = tmp_path / "eval.md"
    emit_report(run_benchmark(RunConfig(manifest=synthetic)), "md", eval_out)
    assert eval_out.exists()
    assert not (tmp_path / "eval.md.plotdata.csv").exists()
