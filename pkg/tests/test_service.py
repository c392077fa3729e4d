import json

import pytest
from fastapi.testclient import TestClient

from bfrbench.harness import save_image
from bfrbench.service import create_app
from bfrbench.stunet import StunetConfig, build, load_checkpoint

from imagegen import smooth_image

CFG = {"base_channels": 8, "stl_counts": [1, 1, 1, 1], "window_size": 4,
       "input_size": [32, 32]}


@pytest.fixture()
def client():
    with TestClient(create_app(), raise_server_exceptions=False) as c:
        yield c


def _hq_corpus(path, n=4, size=32):
    path.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        save_image(smooth_image(i, size, size), path / f"img{i:02d}.ppm")
    return path


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_degrade_endpoint(client, tmp_path):
    hq = _hq_corpus(tmp_path / "hq")
    r = client.post("/degrade", json={"hq_dir": str(hq), "setting": "blur",
                                      "out_dir": str(tmp_path / "lq"), "seed": 5})
    assert r.status_code == 200
    body = r.json()
    assert body["images"] == 4 and body["errors"] == []
    manifest = [json.loads(line) for line in
                open(body["manifest"], encoding="utf-8")]
    assert len(manifest) == 4
    assert all(row["setting"] == "blur" for row in manifest)


def test_degrade_partial_failure_reported(client, tmp_path):
    hq = _hq_corpus(tmp_path / "hq")
    (hq / "broken.ppm").write_bytes(b"P6\n9 9\n255\nxx")
    r = client.post("/degrade", json={"hq_dir": str(hq), "setting": "noise",
                                      "out_dir": str(tmp_path / "lq")})
    assert r.status_code == 200
    body = r.json()
    assert body["images"] == 4 and len(body["errors"]) == 1
    assert (tmp_path / "lq" / "errors.jsonl").exists()


def test_degrade_rejects_bad_setting(client, tmp_path):
    hq = _hq_corpus(tmp_path / "hq")
    r = client.post("/degrade", json={"hq_dir": str(hq), "setting": "sepia",
                                      "out_dir": str(tmp_path / "lq")})
    assert r.status_code == 422


def _degrade_and_train(client, tmp_path, epochs=1):
    hq = _hq_corpus(tmp_path / "hq")
    client.post("/degrade", json={"hq_dir": str(hq), "setting": "noise",
                                  "out_dir": str(tmp_path / "lq"), "seed": 1})
    ckpt = tmp_path / "model.stun"
    r = client.post("/train", json={
        "manifest": str(tmp_path / "lq" / "manifest.jsonl"),
        "out": str(ckpt), "epochs": epochs, "batch_size": 2, "config": CFG})
    return hq, ckpt, r


def test_train_endpoint_writes_checkpoint_and_log(client, tmp_path):
    _, ckpt, r = _degrade_and_train(client, tmp_path)
    assert r.status_code == 200
    body = r.json()
    assert body["iterations"] == 2
    assert load_checkpoint(ckpt).config == StunetConfig.from_json(CFG)
    records = [json.loads(line) for line in open(body["log"], encoding="utf-8")]
    assert [r["iter"] for r in records] == [0, 1]


def test_train_epochs_zero_equals_initialization(client, tmp_path):
    _, ckpt, r = _degrade_and_train(client, tmp_path, epochs=0)
    assert r.status_code == 200
    loaded = load_checkpoint(ckpt)
    assert loaded.checksum() == build(StunetConfig.from_json(CFG), seed=0).checksum()


def test_restore_endpoint_counts_and_determinism(client, tmp_path):
    _, ckpt, _ = _degrade_and_train(client, tmp_path)
    for out in ("r1", "r2"):
        r = client.post("/restore", json={"ckpt": str(ckpt),
                                          "in_dir": str(tmp_path / "lq"),
                                          "out_dir": str(tmp_path / out)})
        assert r.status_code == 200 and r.json()["images"] == 4
    for name in sorted(p.name for p in (tmp_path / "r1").iterdir()):
        assert ((tmp_path / "r1" / name).read_bytes()
                == (tmp_path / "r2" / name).read_bytes())


def test_restore_size_mismatch_names_file(client, tmp_path):
    _, ckpt, _ = _degrade_and_train(client, tmp_path)
    bad = tmp_path / "bad"
    bad.mkdir()
    save_image(smooth_image(9, 48, 48), bad / "toolarge.ppm")
    r = client.post("/restore", json={"ckpt": str(ckpt), "in_dir": str(bad),
                                      "out_dir": str(tmp_path / "out")})
    assert r.status_code == 400
    assert "toolarge.ppm" in r.json()["detail"]


def test_evaluate_endpoint_subset_columns(client, tmp_path):
    hq = _hq_corpus(tmp_path / "hq")
    r = client.post("/evaluate", json={
        "restored": str(hq), "gt": str(hq), "metrics": ["psnr"],
        "out_prefix": str(tmp_path / "rep")})
    assert r.status_code == 200
    assert r.json()["aggregates"]["psnr"]["value"] == 99.0
    header, first = (tmp_path / "rep.csv").read_text().splitlines()[:2]
    assert header == "id,psnr,ssim,ms_ssim,niqe,afld,afics"
    cells = first.split(",")
    assert cells[1] == "inf" and cells[2] == "" and cells[6] == ""


def test_evaluate_aux_validation(client, tmp_path):
    hq = _hq_corpus(tmp_path / "hq")
    for metric in ("afld", "afics", "niqe"):
        r = client.post("/evaluate", json={"restored": str(hq), "gt": str(hq),
                                           "metrics": [metric]})
        assert r.status_code == 422, metric


def test_split_endpoint(client, tmp_path):
    hq = _hq_corpus(tmp_path / "hq", n=8)
    client.post("/degrade", json={"hq_dir": str(hq), "setting": "jpeg",
                                  "out_dir": str(tmp_path / "lq")})
    manifest = tmp_path / "lq" / "manifest.jsonl"
    r = client.post("/split", json={"manifest": str(manifest),
                                    "train_fraction": 0.5, "seed": 3,
                                    "out": str(tmp_path / "split.jsonl")})
    assert r.status_code == 200
    body = r.json()
    assert body["train"] + body["test"] == 8
    rows = [json.loads(line) for line in
            (tmp_path / "split.jsonl").read_text().splitlines()]
    assert sum(row["split"] == "train" for row in rows) == body["train"]
    r2 = client.post("/split", json={"manifest": str(manifest),
                                     "train_fraction": 1.5, "seed": 3})
    assert r2.status_code == 422


def test_niqe_fit_endpoint(client, tmp_path):
    pristine = tmp_path / "pristine"
    pristine.mkdir()
    for i in range(12):
        save_image(smooth_image(400 + i, 96, 96, texture=0.03),
                   pristine / f"p{i:02d}.ppm")
    out = tmp_path / "model.json"
    r = client.post("/niqe-fit", json={"pristine": str(pristine), "out": str(out)})
    assert r.status_code == 200
    model = json.loads(out.read_text())
    assert len(model["mean"]) == 36
    assert len(model["cov"]) == 36 and len(model["cov"][0]) == 36
    assert model["patch"] == 32 and model["quantile"] == 0.75
    r2 = client.post("/niqe-fit", json={"pristine": str(pristine),
                                        "out": str(tmp_path / "model2.json")})
    assert r2.json()["corpus_hash"] == r.json()["corpus_hash"]
    assert (tmp_path / "model2.json").read_bytes() == out.read_bytes()


def test_niqe_fit_too_few_images(client, tmp_path):
    pristine = tmp_path / "pristine"
    pristine.mkdir()
    save_image(smooth_image(1, 96, 96), pristine / "only.ppm")
    r = client.post("/niqe-fit", json={"pristine": str(pristine),
                                       "out": str(tmp_path / "m.json")})
    assert r.status_code == 400


def test_missing_manifest_is_runtime_error(client, tmp_path):
    r = client.post("/train", json={"manifest": str(tmp_path / "nope.jsonl"),
                                    "out": str(tmp_path / "m.stun"),
                                    "config": CFG})
    assert r.status_code == 400
