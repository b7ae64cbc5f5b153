import json

import numpy as np
import pytest

import convctx


def test_url_and_hashtag_cleaning():
    assert convctx.normalize_url("http://aje.io/3p45z") == "aje.io/3p45z"
    assert convctx.normalize_url("https://m.youtube.com/watch?v=ivT2z5UgHxo") == "youtu.be/ivT2z5UgHxo"
    assert convctx.normalize_hashtag("#MAGA") == "maga"
    assert convctx.clean_text("Vote! #MAGA https://t.co/x") == ["vote"]
    with pytest.raises(ValueError):
        convctx.normalize_url("not a url")


def test_hdbscan_one_dimensional_example():
    labels, stability = convctx.hdbscan(np.array([[1.0], [2.0], [10.0], [11.0]]), min_cluster_size=2)
    assert labels == [0, 0, 1, 1]
    assert len(stability) == 2


def test_pagerank_and_rank_statistics():
    scores = convctx.pagerank([("a", "b", 1.0), ("b", "a", 1.0)])
    assert scores == {"a": 0.5, "b": 0.5}
    assert sum(convctx.pagerank([("a", "b", 2.0)], users=["c"]).values()) == pytest.approx(1.0, abs=1e-9)
    assert convctx.kendall_tau([1, 2, 3], [3, 2, 1]) == -1.0
    assert convctx.percentile_rank([0.1, 0.3, 0.2], 1) == 100.0


def test_partition_quality_reports_noise():
    q = convctx.partition_quality([0, 0, -1, 1], [0, 0, 1, 1])
    assert q["ari"] == 1.0
    assert q["noise_fraction"] == 0.25


def test_synthesize_and_pipeline(tmp_path):
    truth = convctx.synthesize(
        "n_contexts = 2\ntweets_per_context = 60\nusers_per_context = 20\nhubs_per_context = 2\n"
        "url_probability = 1.0\nvector_dim = 12\nseed = 5\n",
        str(tmp_path / "records.jsonl"),
        str(tmp_path / "truth.json"),
        str(tmp_path / "vectors"),
    )
    assert truth["context_tweets"] == [60, 60]
    (tmp_path / "run.ini").write_text(
        "[input]\nrecords = records.jsonl\nvectors = vectors\n"
        "[train]\nbatch_size = 32\nepochs = 2\nhidden_dim = 8\n[cluster]\nmin_cluster_size = 10\n"
    )
    manifest = convctx.run_pipeline(str(tmp_path / "run.ini"), workdir=str(tmp_path / "out"), deterministic=True)
    stages = [s["stage"] for s in manifest["stages"]]
    assert stages[:3] == ["ingest", "build-graph", "embed-features"]
    assert (tmp_path / "out" / "labels.csv").exists()
    again = convctx.run_pipeline(str(tmp_path / "run.ini"), workdir=str(tmp_path / "out"), deterministic=True)
    assert all(s["cached"] for s in again["stages"])
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["stages"]


def test_pipeline_errors_are_typed(tmp_path):
    (tmp_path / "run.ini").write_text("[input]\nrecords = missing.jsonl\nvectors = vec\n")
    with pytest.raises(convctx.DataError):
        convctx.run_pipeline(str(tmp_path / "run.ini"), workdir=str(tmp_path / "out"))
