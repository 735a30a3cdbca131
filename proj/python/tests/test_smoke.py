# Copyright 2026 The latref Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json

import pytest

import latref

TINY = [
    "task.vocab=12", "task.min_len=2", "task.max_len=4",
    "task.n_train=40", "task.n_dev=4", "task.n_test=6",
    "lvm.vocab=12", "lvm.d_latent=2", "lvm.d_model=16", "lvm.d_filter=32",
    "lvm.n_layers=1", "lvm.n_heads=2", "lvm.t_max=8", "lvm.len_offset_max=2",
    "gradnet.d_latent=2", "gradnet.d_model=16", "gradnet.d_filter=32",
    "gradnet.n_layers=1", "gradnet.n_heads=2", "gradnet.d_source=16",
    "ar.vocab=12", "ar.d_model=16", "ar.d_filter=32", "ar.t_max=8",
    "lvm_train.optim.steps=6", "lvm_train.optim.batch_size=2",
    "gradnet_train.optim.steps=4", "gradnet_train.optim.batch_size=2",
    "gradnet_train.delta_steps=2",
    "ar_train.optim.steps=4", "ar_train.optim.batch_size=2",
    "eval.is_samples=10", "eval.steps_list=[0,1]", "gradfield.resolution=3",
]


def test_config_round_trip_and_errors():
    cfg = latref.config(["lvm.d_latent=2", "decode.procedure=delta"])
    assert cfg["lvm"]["d_latent"] == 2
    assert cfg["decode"]["procedure"] == "delta"
    assert json.loads(latref.make_config(latref.default_config())) == latref.config()
    with pytest.raises(ValueError, match="lvm.d_modle"):
        latref.make_config(None, ["lvm.d_modle=3"])


def test_metrics():
    assert latref.edit_distance([3, 4, 5], [3, 9, 5]) == 1
    assert latref.repetition_count([3, 3, 4, 4, 4]) == 3
    assert latref.remove_repetitions([3, 3, 4, 4, 4, 3]) == [3, 4, 3]
    assert latref.token_accuracy([3, 4], [3, 4, 5, 6]) == 0.5
    assert latref.bleu([[3, 4, 5, 6]], [[3, 4, 5, 7]]) == pytest.approx(65.80, abs=5e-3)


def test_oracles():
    assert all(c["pass"] for c in latref.objective_identity_suite(20, 1))
    truth = latref.toy_quadrature_log_marginal()
    value, ess = latref.toy_importance_sample(20000, 3)
    assert abs(value - truth) < 0.05
    assert ess > 100


def test_selftest_passes():
    checks = latref.selftest(5)
    assert checks
    assert all(c["pass"] for c in checks), [c for c in checks if not c["pass"]]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    latref.init_run(str(root), overrides=TINY, seed=3)
    assert latref.gen_data(str(root)) == (40, 4, 6)
    assert latref.train_lvm(str(root))["last_step"] == 6
    latref.train_ar(str(root))
    latref.train_gradnet(str(root), "score")
    return root


def test_pipeline(run_dir):
    results = latref.translate(str(run_dir), ["decode.steps=2"])
    assert len(results) == 6
    for r in results:
        assert latref.repetition_count(r["output"]) == 0
    search = latref.translate(str(run_dir), ["decode.length_candidates=2", "decode.latent_samples=2"],
                              str(run_dir / "outputs" / "search.txt"))
    assert all(len(r["candidates"]) >= 2 for r in search)
    report = json.loads(latref.evaluate(str(run_dir), ['eval.procedures=["delta","score"]']))
    assert report
    grid = json.loads(latref.gradfield(str(run_dir)))
    assert len(grid["directions"]) == 9


def test_decoder_matches_run_translate(run_dir):
    ckpt = run_dir / "checkpoints"
    dec = latref.Decoder(str(ckpt / "lvm.ckpt"), str(ckpt / "gradnet-score.ckpt"))
    assert dec.d_latent == 2
    src = [int(t) for t in (run_dir / "data" / "test.src").read_text().splitlines()[0].split()]
    first = latref.translate(str(run_dir), ["decode.steps=1"])[0]
    assert dec.translate(src, ["decode.steps=1"])["raw"] == first["raw"]
    trace = dec.trace(src, ["decode.steps=3"])
    assert trace["procedure"] == "score"
    assert len(trace["steps"]) <= 3
    with pytest.raises(ValueError):
        dec.translate(src, ["decode.length_candidates=3"])


def test_runs_are_deterministic(tmp_path):
    arts = []
    for name in ("a", "b"):
        root = tmp_path / name
        latref.init_run(str(root), overrides=TINY, seed=9)
        latref.gen_data(str(root))
        latref.train_lvm(str(root))
        arts.append(latref.run_artifacts(str(root)))
    assert arts[0] == arts[1]
