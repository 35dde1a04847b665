"""Acceptance gate: the eight headline criteria, one test (and one
pass/fail line under pytest -v) per criterion.

The two training fixtures run the full default recipe, so this module
takes several minutes; everything else is seconds.
"""

import math
import os
import time
from dataclasses import replace

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from d2dpower import autodiff as ad
from d2dpower.bench import emit_report, parse_report, run_scalability, run_timing
from d2dpower.channel import ChannelConfig, NetworkInstance, build_graph, generate_instance
from d2dpower.models import Model, WugnnSpec
from d2dpower.nn import finite_diff_check, load_checkpoint, save_checkpoint
from d2dpower.training import (
    TrainConfig,
    batch_loss,
    evaluate,
    fresh_split,
    make_dataset,
    train,
)
from d2dpower.wmmse import (
    check_feasible,
    grid_oracle,
    run_wmmse,
    update_u,
    update_v,
    update_w,
)

CHANNEL_N10 = ChannelConfig(n=10, seed=0)
EVAL_SIZES = (10, 20, 30, 50)
EVAL_COUNT = 50


def _fresh(n: int, count: int = EVAL_COUNT):
    # seeds far above every training range so eval instances are fresh
    return fresh_split(replace(CHANNEL_N10, n=n), count, base_seed=5_000_000 + n * 1000)


@pytest.fixture(scope="module")
def trained_wugnn():
    config = TrainConfig()
    start = time.perf_counter()
    dataset = make_dataset(
        CHANNEL_N10, (config.n_train, config.n_val, config.n_test), base_seed=config.seed
    )
    result = train(config, dataset)
    return result, time.perf_counter() - start


@pytest.fixture(scope="module")
def trained_baseline():
    config = TrainConfig(model_kind="gnn_baseline")
    start = time.perf_counter()
    dataset = make_dataset(
        CHANNEL_N10, (config.n_train, config.n_val, config.n_test), base_seed=config.seed
    )
    result = train(config, dataset)
    return result, time.perf_counter() - start


def test_a1_wmmse_correctness_properties():
    start = time.perf_counter()
    worst_drop = 0.0
    worst_w = math.inf
    worst_extra_move = 0.0
    for k in range(200):
        instance = generate_instance(ChannelConfig(n=1 + k % 3, seed=k))
        trace = run_wmmse(instance, tol=1e-12, max_iter=2000)
        rates = [trace.initial_sum_rate] + list(trace.sum_rates)
        worst_drop = min(worst_drop, float(np.min(np.diff(rates))))
        for state in trace.states:
            worst_w = min(worst_w, float(np.min(state.w)))
        v = check_feasible(instance, trace.final_v)
        u = update_u(instance, v)
        w = update_w(instance, u, v)
        v_next = update_v(instance, u, w)
        worst_extra_move = max(worst_extra_move, float(np.max(np.abs(v_next - v))))
    elapsed = time.perf_counter() - start
    print(
        f"A1: worst rate drop {worst_drop:.2e}, min w {worst_w:.15f}, "
        f"worst extra-sweep move {worst_extra_move:.2e}, {elapsed:.1f}s"
    )
    assert worst_drop >= -1e-9
    assert worst_w >= 1.0 - 1e-12
    assert worst_extra_move < 1e-5
    assert elapsed < 10.0


def test_a2_wmmse_near_oracle_small():
    start = time.perf_counter()
    within = 0
    max_excess = -math.inf
    for k in range(100):
        instance = generate_instance(ChannelConfig(n=2, seed=k))
        achieved = run_wmmse(instance).final_sum_rate
        _, oracle_rate = grid_oracle(instance, 41)
        if oracle_rate - achieved <= 0.05:
            within += 1
        max_excess = max(max_excess, achieved - oracle_rate)
    elapsed = time.perf_counter() - start
    print(f"A2: {within}/100 within 0.05 bits, max excess {max_excess:.2e}, {elapsed:.1f}s")
    assert within >= 90
    assert max_excess <= 1e-6
    assert elapsed < 30.0


def test_a3_wugnn_tracks_wmmse_across_sizes(trained_wugnn):
    result, train_seconds = trained_wugnn
    start = time.perf_counter()
    ratios = {}
    for n in EVAL_SIZES:
        report = evaluate(result.model, result.params, _fresh(n))
        ratios[n] = report.ratio
    elapsed = train_seconds + time.perf_counter() - start
    summary = ", ".join(f"n={n}: {ratios[n]:.4f}" for n in EVAL_SIZES)
    print(f"A3: ratios {summary} (train {train_seconds:.0f}s, total {elapsed:.0f}s)")
    for n in EVAL_SIZES:
        assert ratios[n] >= 0.95, f"ratio at n={n} is {ratios[n]:.4f} < 0.95"
    assert elapsed < 1800.0


def test_a4_baseline_ratio_degrades(trained_wugnn, trained_baseline):
    wugnn_result, _ = trained_wugnn
    baseline_result, _ = trained_baseline
    budget_gap = abs(
        wugnn_result.model.n_params() - baseline_result.model.n_params()
    ) / wugnn_result.model.n_params()
    ratio_10 = evaluate(baseline_result.model, baseline_result.params, _fresh(10)).ratio
    ratio_50 = evaluate(baseline_result.model, baseline_result.params, _fresh(50)).ratio
    print(
        f"A4: baseline ratio n=10 {ratio_10:.4f} vs n=50 {ratio_50:.4f}, "
        f"parameter budget gap {budget_gap:.1%}"
    )
    assert budget_gap <= 0.20
    assert ratio_50 < ratio_10


def test_a5_inference_time_ratio_at_n100(trained_wugnn):
    result, _ = trained_wugnn
    start = time.perf_counter()
    report = run_timing(
        {"wugnn": (result.model, result.params)},
        sizes=(100,),
        repetitions=10,
        warmup=2,
        seed=0,
        threads=1,
    )
    medians = {r.method: r.median_s for r in report.records}
    elapsed = time.perf_counter() - start
    print(
        f"A5: median wmmse {medians['wmmse']:.4f}s, wugnn {medians['wugnn']:.4f}s "
        f"(ratio {medians['wmmse'] / medians['wugnn']:.1f}x), {elapsed:.1f}s"
    )
    assert report.environment["threads"] == 1
    assert medians["wugnn"] <= medians["wmmse"] / 10.0
    assert medians["wugnn"] <= 1.0
    assert elapsed < 900.0


def _weighted(expr, seed):
    if expr.data.shape == ():
        return expr
    weights = ad.Tensor(np.random.default_rng(seed).uniform(0.5, 1.5, expr.data.shape))
    return ad.sum_reduce(ad.mul(expr, weights))


PRIMITIVE_CASES = {
    "add": (lambda p: ad.add(p["x"], p["y"]), {"x": ((3, 4), -1.0, 1.0), "y": ((4,), -1.0, 1.0)}),
    "mul": (lambda p: ad.mul(p["x"], p["y"]), {"x": ((3, 4), -1.0, 1.0), "y": ((3, 4), -1.0, 1.0)}),
    "div": (lambda p: ad.div(p["x"], p["y"]), {"x": ((3, 4), -1.0, 1.0), "y": ((3, 4), 0.5, 1.5)}),
    "matmul": (lambda p: ad.matmul(p["x"], p["y"]), {"x": ((3, 4), -1.0, 1.0), "y": ((4, 2), -1.0, 1.0)}),
    "sum_reduce": (lambda p: ad.mul(ad.sum_reduce(p["x"]), ad.sum_reduce(p["x"])), {"x": ((3, 4), -1.0, 1.0)}),
    "log": (lambda p: ad.log(p["x"]), {"x": ((3, 4), 0.3, 2.0)}),
    "exp": (lambda p: ad.exp(p["x"]), {"x": ((3, 4), -1.0, 1.0)}),
    "relu": (lambda p: ad.relu(p["x"]), {"x": ((3, 4), 0.2, 1.0)}),
    "tanh": (lambda p: ad.tanh(p["x"]), {"x": ((3, 4), -1.5, 1.5)}),
    "sigmoid": (lambda p: ad.sigmoid(p["x"]), {"x": ((3, 4), -1.5, 1.5)}),
    "symlog": (lambda p: ad.symlog(p["x"]), {"x": ((3, 4), -3.0, 3.0)}),
    "clamp": (lambda p: ad.clamp(p["x"], -0.5, 0.5), {"x": ((3, 4), -0.4, 0.4)}),
    "gather_rows": (lambda p: ad.gather_rows(p["x"], np.array([0, 2, 2, 4, 1])), {"x": ((5, 3), -1.0, 1.0)}),
    "scatter_add_rows": (lambda p: ad.scatter_add_rows(p["x"], np.array([3, 0, 0, 2, 3, 1]), 4), {"x": ((6, 3), -1.0, 1.0)}),
    "concat_cols": (lambda p: ad.concat_cols([p["x"], p["y"]]), {"x": ((3, 2), -1.0, 1.0), "y": ((3, 3), -1.0, 1.0)}),
    "slice_cols": (lambda p: ad.slice_cols(p["x"], 1, 3), {"x": ((3, 4), -1.0, 1.0)}),
}


def test_a6_gradients_match_finite_differences():
    start = time.perf_counter()
    worst_primitive = 0.0
    for name, (builder, arg_specs) in sorted(PRIMITIVE_CASES.items()):
        params = {
            key: ad.Tensor(
                np.random.default_rng(hash(name + key) % 2**32).uniform(low, high, shape),
                requires_grad=True,
            )
            for key, (shape, low, high) in arg_specs.items()
        }
        err = finite_diff_check(lambda p: _weighted(builder(p), seed=0), params, step=1e-5)
        assert err < 1e-4, f"primitive {name}: relative error {err:.2e}"
        worst_primitive = max(worst_primitive, err)

    # end to end through the unrolled model on an n=3 instance; a compact
    # layer stack keeps the gradients well above the finite-difference
    # cancellation floor while exercising the same code path
    model = Model(kind="wugnn", spec=WugnnSpec.default(k_layers=2, hidden_dim=3, mlp_hidden=4))
    params = model.init(seed=0)
    instance = generate_instance(ChannelConfig(n=3, seed=0))
    graph = build_graph(instance)
    end_to_end = finite_diff_check(
        lambda p: batch_loss(model, p, [graph], instance.p_max), params, step=1e-5
    )
    elapsed = time.perf_counter() - start
    print(
        f"A6: worst primitive error {worst_primitive:.2e}, "
        f"end-to-end error {end_to_end:.2e}, {elapsed:.1f}s"
    )
    assert end_to_end < 1e-4
    assert elapsed < 60.0


def test_a7_equivariance_and_feasibility():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    models = (Model.default("wugnn"), Model.default("gnn_baseline"))
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(2, 9))
        p_max = float(rng.choice([1.0, 2.0]))
        instance = generate_instance(ChannelConfig(n=n, seed=1000 + k, p_max=p_max))
        perm = rng.permutation(n)
        permuted = NetworkInstance(
            n=n,
            h=instance.h[np.ix_(perm, perm)],
            noise_power=instance.noise_power,
            p_max=instance.p_max,
            seed=instance.seed,
        )
        for model in models:
            params = model.init(seed=k)
            out = model.forward_graph(params, build_graph(instance), instance)
            out_perm = model.forward_graph(params, build_graph(permuted), permuted)
            worst = max(worst, float(np.max(np.abs(out_perm - out[perm]))))
            for values in (out, out_perm):
                assert np.all(values >= 0.0)
                assert np.all(values <= math.sqrt(p_max))
    elapsed = time.perf_counter() - start
    print(f"A7: worst permutation mismatch {worst:.2e} over 100 triples, {elapsed:.1f}s")
    assert worst <= 1e-10
    assert elapsed < 60.0


def test_a8_determinism_and_lossless_round_trips(tmp_path):
    # two identically seeded short trainings must write identical bytes
    config = TrainConfig(
        epochs=2, batch_size=32, eval_every=1, seed=0, n_train=128, n_val=32, n_test=32
    )
    dataset = make_dataset(ChannelConfig(n=4, seed=0), (128, 32, 32), base_seed=0)
    first = tmp_path / "first.json"
    second = tmp_path / "second.json"
    train(config, dataset).save(first)
    train(config, dataset).save(second)
    identical = first.read_bytes() == second.read_bytes()

    # checkpoint load/save round trip is byte-stable too
    params, meta = load_checkpoint(first)
    resaved = tmp_path / "resaved.json"
    save_checkpoint(resaved, params, meta)
    resave_identical = resaved.read_bytes() == first.read_bytes()

    # both benchmark report formats survive an emit/parse round trip
    model = Model(kind="wugnn", spec=WugnnSpec.default(k_layers=2, hidden_dim=3, mlp_hidden=4))
    checkpoints = {"wugnn": (model, model.init(seed=0))}
    scal = run_scalability(checkpoints, sizes=(2, 3), trials_per_size=3, seed=0)
    timing = run_timing(checkpoints, sizes=(2,), repetitions=5, warmup=1, seed=0)
    scal_path = tmp_path / "scal.json"
    timing_path = tmp_path / "timing.json"
    emit_report(scal, scal_path, format="json")
    emit_report(timing, timing_path, format="json")
    scal_ok = parse_report(scal_path) == scal
    timing_ok = parse_report(timing_path) == timing

    print(
        f"A8: retrain bytes identical {identical}, resave identical {resave_identical}, "
        f"scalability round trip {scal_ok}, timing round trip {timing_ok}"
    )
    assert identical
    assert resave_identical
    assert scal_ok
    assert timing_ok
