import os

import numpy as np
import pytest

from chronospike import autodiff as ad
from chronospike import training as tr
from chronospike.config import TrainConfig
from chronospike.graph import SnapshotSequence
from chronospike.model import (ChronoSpike, FixedSampler, classify, count_parameters,
                               formula_estimate, forward_encoder, logits)
from chronospike.training import Checkpoint, RunReport, infer, predict, resolve_splits, train
from checks import soft_mode_gradient_errors
from conftest import tiny_config, toy_sequence
from oracles import aggregate_loop, transformer_loop


def _model(cfg, seq, seed=0):
    return ChronoSpike(cfg, seq.feature_dim, max(seq.num_classes, 2), np.random.default_rng(seed))


# --------------------------------------------------------------------------
# encoder forward


def test_single_step_single_layer_forward_by_hand():
    seq = toy_sequence(5, 1, d_in=3, seed=11)
    cfg = tiny_config(hidden=(4,), fanouts=(2,), heads=2, temporal_heads=2, vth_init=0.2)
    model = _model(cfg, seq)
    p = model.params
    v = 2
    sampler = FixedSampler(cfg.seed)
    enc = forward_encoder(model.bind(None), seq, [v], training=False, sampler=sampler)

    nbrs = sampler.tree(seq, [v], 0, cfg.fanouts, cfg.sampling_p)[1]
    x = seq.features[0]
    h, _ = aggregate_loop(x[v], x[nbrs], *(p[f"spatial.0.{w}"] for w in
                                           ("w_s", "w_q", "w_k", "w_n", "w_o")), 2)
    # tau = 1 from a zero state: the membrane equals its input
    spikes = [1.0 if u >= 0.2 else 0.0 for u in h]
    row = [[s + q for s, q in zip(spikes, p["temporal.pos"][0])]]
    blk = {k.split(".", 1)[1]: a for k, a in p.items() if k.startswith("temporal.") and k != "temporal.pos"}
    z, _ = transformer_loop(row, blk, 2)
    assert np.allclose(enc.z.data[0], z, rtol=1e-12, atol=1e-12)
    assert enc.spike_log.spikes[0][0, :, 0].tolist() == spikes


def test_zero_features_give_silent_network(tiny_cfg):
    seq = toy_sequence()
    seq.features[...] = 0.0
    model = _model(tiny_cfg, seq)
    enc = forward_encoder(model.bind(None), seq, np.arange(5), training=False)
    assert all(not s.any() for s in enc.spike_log.spikes)
    # with every spike zero the readout only sees the positional rows
    assert np.allclose(enc.z.data, enc.z.data[0], atol=1e-14)
    from chronospike.temporal import encode_sequence
    pos = model.bind(None).t["temporal.pos"].data[None, :seq.num_steps]
    z, _ = encode_sequence(ad.Tensor(pos), model.bind(None).transformer())
    assert np.allclose(enc.z.data[0], z.data[0], atol=1e-14)


def test_forward_is_deterministic_under_seed(tiny_cfg, toy_seq):
    model = _model(tiny_cfg, toy_seq)

    def run():
        rng = np.random.default_rng(4)
        return forward_encoder(model.bind(None), toy_seq, np.arange(5), training=True, rng=rng).z.data

    assert run().tobytes() == run().tobytes()


def test_spike_log_shapes(tiny_cfg, toy_seq):
    model = _model(tiny_cfg, toy_seq)
    enc = forward_encoder(model.bind(None), toy_seq, [0, 1], training=False)
    assert [s.shape for s in enc.spike_log.spikes] == [(2, 8, 3), (2, 4, 3)]
    assert enc.attn.shape == (2, 2, 3, 3)


def test_forward_rejects_bad_nodes_and_widths(tiny_cfg, toy_seq):
    model = _model(tiny_cfg, toy_seq)
    with pytest.raises(IndexError):
        forward_encoder(model.bind(None), toy_seq, [7], training=False)
    other = ChronoSpike(tiny_cfg, 5, 2)
    with pytest.raises(ad.ShapeError):
        forward_encoder(other.bind(None), toy_seq, [0], training=False)


def test_class_probabilities_are_distributions(tiny_cfg, toy_seq):
    model = _model(tiny_cfg, toy_seq)
    bound = model.bind(None)
    enc = forward_encoder(bound, toy_seq, np.arange(5), training=False)
    assert np.allclose(classify(enc.z, bound).data.sum(1), 1.0, atol=1e-9)
    bound.t["classifier.w"].data[...] = 0.0
    assert np.allclose(classify(enc.z, bound).data, 0.5, atol=1e-15)


# --------------------------------------------------------------------------
# gradients


def test_soft_mode_gradients_match_finite_differences():
    errors = soft_mode_gradient_errors()
    worst = max(errors, key=errors.get)
    assert errors[worst] < 1e-3, f"{worst}: {errors[worst]:.2e}"


def test_every_parameter_group_receives_gradient(tiny_cfg):
    seq = toy_sequence(8, 3, seed=2)
    model = _model(tiny_cfg.replace(vth_init=0.0), seq)
    step = tr.loss_and_grads(model, seq, np.arange(8), np.random.default_rng(0))
    assert set(step.grads) == set(model.params)
    for name in ("spatial.0.w_s", "lif.0.v_th", "lif.1.tau_raw", "temporal.w_q", "classifier.w"):
        assert np.abs(step.grads[name]).sum() > 0, name


# --------------------------------------------------------------------------
# training loop


def test_contrastive_weight_sweep_runs(tiny_cfg, toy_seq):
    a = train(toy_seq, tiny_cfg.replace(contrastive_weight=0.0))
    b = train(toy_seq, tiny_cfg.replace(contrastive_weight=0.1))
    assert all(r["loss_con"] == 0.0 for r in a.report.records)
    assert all(r["loss_con"] > 0.0 for r in b.report.records)


def test_patience_stops_ten_epochs_after_best(toy_seq):
    cfg = tiny_config(epochs=50, patience=10)
    scores = {1: 0.2, 2: 0.4, 3: 0.3}
    res = train(toy_seq, cfg, val_score=lambda m, e: scores.get(e, 0.1))
    assert res.report.best_epoch == 2
    assert res.report.stopped_early
    assert len(res.report.records) == 2 + 10
    assert res.checkpoint.epoch == 2


def test_clipped_updates_stay_bounded(tiny_cfg, toy_seq):
    res = train(toy_seq, tiny_cfg.replace(grad_clip=1e-3, epochs=2))
    assert all(np.isfinite(r["grad_norm"]) for r in res.report.records)


def test_divergence_dumps_offending_batch(tiny_cfg, toy_seq, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ad.NonFiniteError("synthetic overflow")

    monkeypatch.setattr(tr, "loss_and_grads", boom)
    with pytest.raises(tr.TrainingDiverged, match="synthetic overflow"):
        train(toy_seq, tiny_cfg, str(tmp_path))
    assert (tmp_path / "diverged_batch.txt").exists()


def test_validation_carved_from_train_when_absent(tiny_cfg):
    seq = toy_sequence(30, 2)
    seq.splits = {"train": np.arange(20), "test": np.arange(20, 30)}
    s = resolve_splits(seq, tiny_cfg.replace(val_fraction=0.1))
    assert len(s["val"]) == 2 and len(s["train"]) == 18
    assert not set(s["val"]) & set(s["train"])
    again = resolve_splits(seq, tiny_cfg.replace(val_fraction=0.1))
    assert np.array_equal(s["val"], again["val"])


def test_no_training_labels_is_an_error(tiny_cfg):
    seq = toy_sequence()
    seq.labels[:] = -1
    with pytest.raises(ValueError, match="labelled"):
        resolve_splits(seq, tiny_cfg)


def test_report_tsv_round_trip(tiny_cfg, toy_seq, tmp_path):
    res = train(toy_seq, tiny_cfg, str(tmp_path))
    text = (tmp_path / "report.tsv").read_text()
    back = RunReport.from_tsv(text)
    assert back.records == res.report.records
    assert back.best_epoch == res.report.best_epoch
    assert back.to_tsv() == text


def test_planted_training_loss_falls(planted_seq):
    # patience above the epoch budget so the run reaches epoch 20
    recs = train(planted_seq, TrainConfig(epochs=20, patience=50)).report.records
    assert len(recs) == 20
    assert recs[19]["loss_total"] < recs[0]["loss_total"]


# --------------------------------------------------------------------------
# checkpoints and inference


def test_checkpoint_round_trips_bit_exactly(tiny_cfg, toy_seq, tmp_path):
    res = train(toy_seq, tiny_cfg, str(tmp_path))
    raw = (tmp_path / "checkpoint.bin").read_bytes()
    ck = Checkpoint.load(str(tmp_path / "checkpoint.bin"))
    assert ck.to_bytes() == raw
    for k, v in res.checkpoint.params.items():
        assert ck.params[k].tobytes() == v.tobytes()
    assert ck.config() == tiny_cfg


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError, match="magic"):
        Checkpoint.load(str(p))


def test_inference_is_repeatable_and_batch_invariant(tiny_cfg, toy_seq):
    ck = train(toy_seq, tiny_cfg).checkpoint
    nodes = np.arange(5)
    a = infer(toy_seq, ck, nodes=nodes)
    assert np.array_equal(a, infer(toy_seq, ck, nodes=nodes))
    assert np.array_equal(infer(toy_seq, ck, batch_size=1, nodes=nodes),
                          infer(toy_seq, ck, batch_size=5, nodes=nodes))


def test_inference_matches_forward_argmax(tiny_cfg, toy_seq):
    model = train(toy_seq, tiny_cfg).model
    bound = model.bind(None)
    enc = forward_encoder(bound, toy_seq, np.arange(5), training=False)
    assert np.array_equal(predict(model, toy_seq, np.arange(5)),
                          np.argmax(logits(enc.z, bound).data, axis=1))


def test_default_inference_batch_rule():
    assert tr.default_infer_batch_size(1_000) == 200_000
    assert tr.default_infer_batch_size(2_000_000) == 10_000


# --------------------------------------------------------------------------
# parameter accounting


def _seq(N, T, d_in=16):
    rng = np.random.default_rng(N + T)
    return SnapshotSequence(N, [np.array([[0, 1]])] * T, rng.normal(size=(T, N, d_in)),
                            rng.integers(0, 3, size=N))


def test_count_is_independent_of_graph_size():
    cfg = TrainConfig()
    a = count_parameters(ChronoSpike(cfg, 16, 3, np.random.default_rng(0)))
    b = count_parameters(ChronoSpike(cfg, _seq(500, 20).feature_dim, _seq(50, 5).num_classes))
    assert a.exact == b.exact


def test_formula_value():
    assert formula_estimate(2, 128) == 4 * 2 * 128 ** 2 + 2 * 128 ** 2 + 2 * 128 == 164_096


def test_doubling_width_roughly_quadruples_count():
    small = count_parameters(ChronoSpike(TrainConfig(hidden=(128, 64)), 128, 2)).exact
    big = count_parameters(ChronoSpike(TrainConfig(hidden=(256, 128)), 256, 2)).exact
    assert 3.5 < big / small < 4.5


def test_report_lists_terms():
    rep = count_parameters(ChronoSpike(TrainConfig(), 128, 2))
    lines = rep.lines()
    assert lines[0] == f"exact\t{rep.exact}" and lines[1] == "formula\t164096"
    assert any(ln.startswith("term.spatial\t") for ln in lines)
    assert rep.exact == sum(rep.groups.values())


def test_training_writes_named_files(tiny_cfg, toy_seq, tmp_path):
    train(toy_seq, tiny_cfg, str(tmp_path))
    assert sorted(os.listdir(tmp_path)) == ["checkpoint.bin", "report.tsv"]
