"""Exit criteria for the package, one test per criterion.

Each test records a single PASS/FAIL line, printed again in the terminal
summary. Criteria 6 and 7 reproduce the instability and seed-variance
experiments at full size and take tens of minutes on one core.
"""
import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ConstantStepper, FrozenStateStepper

from qlab import dataset, nn
from qlab.analysis import SliceSpec, q_slice, seed_variance_study
from qlab.cartpole import Action, reward, step
from qlab.cli import main
from qlab.q_iteration import RunConfig, TargetSet, load_targets, run_iterations, save_targets
from qlab.rollout import AntiAngle, PushLeft, RealDynamics, RolloutConfig, rollout_return

RESULTS: list[str] = []


def record(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({name}): {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def desk_step(s, a):
    x, x_dot, theta, theta_dot = s
    f = 10.0 if a == 1 else -10.0
    c, sn = math.cos(theta), math.sin(theta)
    temp = (f + 0.05 * theta_dot**2 * sn) / 1.1
    thacc = (9.8 * sn - c * temp) / (0.5 * (4.0 / 3.0 - 0.1 * c * c / 1.1))
    xacc = temp - 0.05 * thacc * c / 1.1
    return (x + 0.02 * x_dot, x_dot + 0.02 * xacc, theta + 0.02 * theta_dot, theta_dot + 0.02 * thacc)


def test_1_dynamics_oracle():
    seq = [1, 0, 0, 1, 1, 1, 0, 1, 0, 0]
    s = ref = (0.0, 0.0, 0.0, 0.0)
    worst = 0.0
    for a in seq:
        s = step(s, Action(a)).next_state
        ref = desk_step(ref, a)
        worst = max(worst, float(np.max(np.abs(np.subtract(s, ref)))))
    one = step((0.0, 0.0, 0.0, 0.0), Action.RIGHT).next_state
    one_err = float(np.max(np.abs(np.subtract(one, (0.0, 0.195122, 0.0, -0.292683)))))
    record(1, "dynamics oracle", worst < 1e-9 and one_err < 1e-6,
           f"10-step max deviation {worst:.2e} (< 1e-9), single step deviation {one_err:.2e} (< 1e-6)")


def test_2_reward_spot_checks():
    cases = [((0.0, 0.3, 0.0, -0.2), 1.0), ((2.4, 0.0, 0.2095, 0.0), 0.0), ((1.2, 0.0, 0.0, 0.0), 0.875)]
    errs = [abs(reward(s) - want) for s, want in cases]
    record(2, "reward spot checks", max(errs) < 1e-12, f"max error {max(errs):.1e} (< 1e-12)")


def test_3_gradient_correctness():
    rng = np.random.default_rng(2024)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        p = nn.MlpParams(rng.normal(scale=0.5, size=nn.N_PARAMS))
        n = int(rng.integers(1, 12))
        batch = nn.RegressionSet(rng.normal(size=(n, 5)), rng.normal(size=n))
        analytic = nn.loss_and_gradient(p, batch)[1].flat
        for i in np.flatnonzero(np.abs(analytic) > 1e-8):
            plus, minus = p.copy(), p.copy()
            plus.flat[i] += h
            minus.flat[i] -= h
            fd = (nn.loss_and_gradient(plus, batch)[0] - nn.loss_and_gradient(minus, batch)[0]) / (2 * h)
            worst = max(worst, abs(fd - analytic[i]) / abs(analytic[i]))
    record(3, "gradient correctness", worst < 1e-4, f"max relative error {worst:.2e} over 100 pairs (< 1e-4)")


def test_4_truncation_bound():
    cfg = RolloutConfig()
    bound = cfg.truncation_bound
    closed_form = (1 - 0.99**1000) / (1 - 0.99)
    v = rollout_return((0.0, 0.0, 0.0, 0.0), Action.LEFT, PushLeft(), ConstantStepper(1.0), cfg)
    ok = abs(bound - 4.32e-3) < 5e-6 and bound < 0.005 and abs(v - closed_form) < 1e-9
    record(4, "truncation bound", ok,
           f"gamma^K/(1-gamma) = {bound:.4e} (< 0.005); constant-reward rollout {v:.9f} vs {closed_form:.9f}")


def test_5_discontinuity_reproduction():
    spec, cfg = SliceSpec(10_000), RolloutConfig()
    t0 = time.time()
    parts, ok = [], True
    for pol in (PushLeft(), AntiAngle()):
        m = q_slice(pol, spec, RealDynamics(), cfg, refine=10).metrics
        ok &= m.max_adjacent_jump > 0 and m.refinement_ratio >= 0.5
        parts.append(f"{pol.describe()} jump={m.max_adjacent_jump:.3g} ratio={m.refinement_ratio:.3f}")
    flat = q_slice(PushLeft(), spec, ConstantStepper(1.0), cfg, refine=10).metrics
    smooth = q_slice(PushLeft(), spec, FrozenStateStepper(), cfg, refine=10).metrics
    ok &= flat.refinement_ratio <= 0.2 and smooth.refinement_ratio <= 0.2
    parts.append(f"constant stub ratio={flat.refinement_ratio:.3f}, smooth stub ratio={smooth.refinement_ratio:.3f}")
    record(5, "discontinuity reproduction", ok, "; ".join(parts) + f" [{time.time() - t0:.0f}s]")


def _instability(history) -> tuple[bool, bool]:
    flags = [r.report.successful for r in history]
    if True not in flags:
        return False, False
    first = flags.index(True)
    return True, not all(flags[first:])


def _search(n_data, n_iters, episodes, steps, seeds, out_root):
    """Run BSF_REAL for each master seed until one shows success followed by a collapse."""
    cfg = RunConfig(eval_episodes=episodes, eval_steps=steps)
    attempts = []
    for seed in seeds:
        d = dataset.generate(n_data, seed=seed)
        t0 = time.time()
        h = run_iterations("bsf-real", n_iters, d, cfg, seed=seed, out_dir=Path(out_root) / f"seed_{seed}",
                           until=lambda hist: all(_instability(hist)))
        attempts.append((seed, h, time.time() - t0))
        if all(_instability(h)):
            break
    return attempts


@pytest.fixture(scope="module")
def instability_runs(tmp_path_factory):
    return _search(20_000, 30, 1000, 5000, [0, 1, 2], tmp_path_factory.mktemp("bsf_real"))


def _describe(attempts) -> str:
    out = []
    for seed, h, secs in attempts:
        flags = "".join("S" if r.report.successful else "." for r in h)
        out.append(f"seed {seed}: {flags} ({secs:.0f}s)")
    return "; ".join(out)


def test_6_instability_smoke(tmp_path):
    attempts = _search(5_000, 10, 200, 2000, [0, 1, 2], tmp_path)
    ok = any(any(r.report.successful for r in h) and secs < 300 for _, h, secs in attempts)
    record(6, "instability smoke profile", ok, "5,000 tuples / 10 iterations / 200x2,000 eval: " + _describe(attempts))


def test_6_instability_reproduction(instability_runs):
    ok = any(all(_instability(h)) for _, h, _ in instability_runs)
    record(6, "instability reproduction", ok,
           "success then collapse within 30 BSF_REAL iterations: " + _describe(instability_runs))


def test_7_seed_variance_spread(instability_runs):
    # targets computed from a successful policy, i.e. the ones the next iteration was fitted to
    candidates = [h[i + 1] for _, h, _ in instability_runs for i in range(len(h) - 1) if h[i].report.successful]
    if not candidates:
        record(7, "seed-variance spread", False, "no successful iteration with saved follow-up targets")
    rec = candidates[0]
    study = seed_variance_study(rec.targets, 20, nn.TrainConfig(seed=7), n_episodes=1000, max_steps=5000)
    r = study.returns
    spread = float(r.max() - r.min())
    record(7, "seed-variance spread", spread > 0.25 * r.max(),
           f"targets from the iteration-{rec.iteration - 1} policy, 20 seeds: min={r.min():.1f} "
           f"max={r.max():.1f} spread={spread:.1f} (> {0.25 * r.max():.1f})")


def _tree_identical(a: Path, b: Path) -> bool:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    return files_a == files_b and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files_a)


def test_8_pipeline_determinism(tmp_path):
    outs = []
    for k, workers in enumerate(["1", "1", "3"]):
        out = tmp_path / f"run{k}"
        assert main(["run", "--variant", "bsf-real", "--iters", "2", "--seed", "7", "--workers", workers,
                     "--out", str(out)]) == 0
        outs.append(out)
    n_files = sum(1 for p in outs[0].rglob("*") if p.is_file())
    ok = _tree_identical(outs[0], outs[1]) and _tree_identical(outs[0], outs[2])
    record(8, "pipeline determinism", ok, f"{n_files} files bit-identical across 3 runs (workers 1, 1, 3)")


def test_9_round_trip_integrity(tmp_path):
    rng = np.random.default_rng(99)
    ok = True
    for k in range(10):
        d = dataset.generate(int(rng.integers(1, 300)), seed=int(rng.integers(1 << 30)))
        d.next_states[0] *= 10.0 ** float(rng.integers(-200, 200))
        dataset.save(d, tmp_path / "d.csv")
        ok &= dataset.load(tmp_path / "d.csv") == d

        t = TargetSet(rng.normal(size=(50, 5)) / 3.0, rng.normal(size=50) * 1e7, {"iteration": str(k)})
        save_targets(t, tmp_path / "t.csv")
        ok &= load_targets(tmp_path / "t.csv") == t

        p = nn.MlpParams(rng.normal(size=nn.N_PARAMS) / 7.0)
        nn.save_params(p, tmp_path / "p.csv")
        ok &= nn.load_params(tmp_path / "p.csv") == p
    record(9, "round-trip integrity", bool(ok), "10 random datasets, target sets and parameter files")
