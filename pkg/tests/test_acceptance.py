"""Acceptance gate: ten pass/fail criteria, one test each.

Run with `pytest tests/test_acceptance.py -v` to get one line per
criterion.  Tolerances are pinned here and nowhere else: exact-risk
identities at 1e-12, gradient checks at 1e-5 relative, attack membership
exact.  The directional end-to-end criterion trains real teachers and
students on two moons and is the slowest entry (about half a minute).
"""

import time

import numpy as np
import pytest

from fdcheck import (fd_grad, max_grad_err, np_forward, np_kl_rows, np_ls_ce,
                     np_softmax, np_srst_value, np_trades_value, np_uat_value,
                     np_weight_rows)
from srstlab import losses, oracle, streams, teacher as teacher_mod, trainer
from srstlab.attacks import AttackConfig, pgd
from srstlab.diffcore import network, tape
from srstlab.diffcore.network import ScoreNet
from srstlab.harness import data, presets
from srstlab.harness.config import load_config
from srstlab.harness.evaluation import evaluate
from srstlab.losses import AWRConfig, TeacherOutputs

ATOL = 1e-12
GRAD_TOL = 1e-5

_CACHE = {}


def multiclass_sweep():
    if "multi" not in _CACHE:
        started = time.perf_counter()
        records = oracle.instance_sweep(range(1000), max_points=12, max_classes=4,
                                        atol=ATOL)
        _CACHE["multi"] = (records, time.perf_counter() - started)
    return _CACHE["multi"]


def test_criterion_01_exact_decomposition():
    records, elapsed = multiclass_sweep()
    assert len(records) == 1000
    assert all(r["n_points"] <= 12 and r["n_classes"] <= 4 for r in records)
    bad = [r["seed"] for r in records if not r["decomposition_ok"]]
    assert bad == [], f"decomposition off by more than {ATOL} on seeds {bad[:5]}"
    worst = max(abs(r["r_nat"] + r["r_bdy"] - r["r_rob"]) for r in records)
    assert elapsed < 10.0, f"sweep took {elapsed:.2f}s"
    print(f"PASS criterion 1: clean+boundary = robust on 1000 instances "
          f"(worst gap {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_02_risk_bounds():
    records, _ = multiclass_sweep()
    for rec in records:
        assert rec["r_rob"] <= rec["bound_neighbor_mismatch"] + ATOL, rec["seed"]
        assert rec["r_rob"] <= rec["bound_self_match"] + ATOL, rec["seed"]
        assert rec["r_rob"] <= rec["bound_neighbor_mismatch_alt"] + ATOL, rec["seed"]
        assert rec["r_rob"] <= rec["bound_self_match_alt"] + ATOL, rec["seed"]
        assert rec["bounds_ok"] and rec["bounds_alt_ok"], rec["seed"]
    print("PASS criterion 2: both risk bounds hold on 1000 instances, "
          "both tie breaks, zero violations")


def test_criterion_03_pointwise_inequality():
    records, _ = multiclass_sweep()
    bad = [r["seed"] for r in records if not r["pointwise_ok"]]
    assert bad == [], f"per-point inequality violated on seeds {bad[:5]}"
    binary = [r for r in records if r["n_classes"] == 2]
    assert len(binary) >= 100, "sweep produced too few two-class instances"
    bad_eq = [r["seed"] for r in binary if not r["pointwise_binary_equal"]]
    assert bad_eq == [], f"two-class equality broken on seeds {bad_eq[:5]}"
    print(f"PASS criterion 3: per-point inequality on 1000 instances; equality "
          f"on all {len(binary)} two-class instances")


def test_criterion_04_binary_surrogate_chain():
    started = time.perf_counter()
    records = oracle.binary_sweep(range(1000), lams=(0.5, 1.0, 5.0), atol=ATOL)
    elapsed = time.perf_counter() - started
    assert len(records) == 3000
    for rec in records:
        tag = (rec["seed"], rec["lam"])
        assert rec["r_rob"] <= rec["bound_neighbor_mismatch"] + ATOL, tag
        assert rec["r_rob"] <= rec["bound_self_match"] + ATOL, tag
        assert rec["bound_neighbor_mismatch"] <= rec["bound_trades"] + ATOL, tag
        assert rec["bound_self_match"] <= rec["bound_trades"] + ATOL, tag
        assert rec["bounds_ok"] and rec["bounds_alt_ok"] and rec["trades_dominates"], tag
    print(f"PASS criterion 4: surrogate bound chain on 1000 threshold instances "
          f"x 3 lambdas ({elapsed:.2f}s)")


def test_criterion_05_gradient_oracle():
    rng = np.random.default_rng(0xACCE)
    started = time.perf_counter()
    worst = {"ls_ce": 0.0, "kl": 0.0, "trades": 0.0, "uat": 0.0,
             "srst_detached": 0.0, "srst_live": 0.0}
    for trial in range(100):
        activation = "relu" if trial % 2 == 0 else "tanh"
        net = ScoreNet((2, 4, 3), activation=activation)
        params = network.init_params(net, rng)
        for W, _ in params.layers:
            W += rng.normal(0, 0.3, size=W.shape)
        xb = rng.uniform(0, 1, size=(3, 2))
        yb = rng.integers(0, 3, size=3)
        xu = rng.uniform(0, 1, size=(4, 2))
        xa = np.clip(xu + rng.uniform(-0.1, 0.1, size=xu.shape), 0, 1)
        q_rows = rng.dirichlet(np.ones(3), size=4)
        teacher = TeacherOutputs.from_probs(rng.dirichlet(np.ones(3), size=4), tau=1.2)
        cfg = AWRConfig(lam=3.0, gamma=2.0)
        plist = params.layers

        def check(name, closure, value_fn):
            analytic = network.grad_params(net, params, closure)
            numeric = fd_grad(plist, value_fn)
            err = max_grad_err(analytic.layers, numeric)
            worst[name] = max(worst[name], err)
            assert err < GRAD_TOL, f"{name} gradient error {err:.2e} on trial {trial}"

        check("ls_ce",
              lambda layers: losses.ls_cross_entropy(
                  network.forward_var(net, layers, xb), yb, 0.2),
              lambda pl: np_ls_ce(np_forward(activation, pl, xb), yb, 0.2))

        check("kl",
              lambda layers: losses.kl_div(
                  tape.softmax_rows(network.forward_var(net, layers, xu)), q_rows),
              lambda pl: float(np.mean(np_kl_rows(
                  np_softmax(np_forward(activation, pl, xu)), q_rows))))

        check("trades",
              lambda layers: losses.trades_risk(xu, yb[:1].repeat(4), xa, 3.0,
                                                net, layers),
              lambda pl: np_trades_value(activation, pl, xu, yb[:1].repeat(4), xa, 3.0))

        check("uat",
              lambda layers: losses.uat_risk(xa, yb[:1].repeat(4), 3.0, q_rows[[0, 1, 2, 0]],
                                             net, layers),
              lambda pl: np_uat_value(activation, pl, xa, yb[:1].repeat(4), 3.0,
                                      q_rows[[0, 1, 2, 0]]))

        p_clean0 = np_softmax(np_forward(activation, plist, xu))
        p_adv0 = np_softmax(np_forward(activation, plist, xa))
        frozen_w = np_weight_rows(teacher.probs, p_clean0, p_adv0, cfg.beta)
        check("srst_detached",
              lambda layers: losses.srst_awr_risk(xb, yb, xu, xa, teacher, cfg,
                                                  net, layers),
              lambda pl: np_srst_value(activation, pl, xb, yb, xu, xa,
                                       teacher.kd_probs, teacher.probs, cfg,
                                       weight_mode="frozen", frozen_weight=frozen_w))

        live_cfg = AWRConfig(lam=3.0, gamma=2.0, detach_weight=False)
        check("srst_live",
              lambda layers: losses.srst_awr_risk(xb, yb, xu, xa, teacher, live_cfg,
                                                  net, layers),
              lambda pl: np_srst_value(activation, pl, xb, yb, xu, xa,
                                       teacher.kd_probs, teacher.probs, live_cfg,
                                       weight_mode="live"))

    elapsed = time.perf_counter() - started
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    print(f"PASS criterion 5: autodiff matches central differences on 100 nets "
          f"({detail}, {elapsed:.1f}s)")


def test_criterion_06_attack_contracts():
    meta = np.random.default_rng(0xA77AC)
    net = ScoreNet((2, 3))
    params = network.init_params(net, np.random.default_rng(1))
    params.layers[0][0][:] += meta.normal(0, 1.0, size=(2, 3))
    inner = ("ce_true_label", "ce_teacher_label", "kl_from_clean")
    started = time.perf_counter()
    for trial in range(10_000):
        eps = float(meta.uniform(0.0, 0.3))
        steps = int(meta.integers(0, 4))
        cfg = AttackConfig(eps, max(eps / 4, 1e-3), steps,
                           inner_loss=inner[trial % 3],
                           random_start=bool(trial % 2))
        x = meta.uniform(0, 1, size=(3, 2))
        if cfg.inner_loss == "kl_from_clean":
            ref = network.softmax(network.forward_logits(net, params, x))
        else:
            ref = meta.integers(0, 3, size=3)
        rng = np.random.default_rng(trial) if cfg.random_start else None
        adv = pgd(net, params, x, ref, cfg, rng)
        lo = np.maximum(x - eps, 0.0)
        hi = np.minimum(x + eps, 1.0)
        assert np.all(adv.x_adv >= lo) and np.all(adv.x_adv <= hi), trial
    elapsed = time.perf_counter() - started

    x = meta.uniform(0, 1, size=(5, 2))
    frozen = AttackConfig(0.1, 0.025, 0, random_start=False)
    out = pgd(net, params, x, np.zeros(5, dtype=np.int64), frozen)
    np.testing.assert_array_equal(out.x_adv, x)

    live = AttackConfig(0.1, 0.025, 7, random_start=True)
    y = meta.integers(0, 3, size=5)
    a = pgd(net, params, x, y, live, streams.stream(3, "attack-start", 0))
    b = pgd(net, params, x, y, live, streams.stream(3, "attack-start", 0))
    np.testing.assert_array_equal(a.x_adv, b.x_adv)
    np.testing.assert_array_equal(a.loss, b.loss)
    print(f"PASS criterion 6: 10,000 attacks stay in the ball and domain exactly; "
          f"zero-step identity and stream replay hold ({elapsed:.1f}s)")


def test_criterion_07_definitional_ablation():
    rng = np.random.default_rng(0xAB1A)
    for trial in range(100):
        net = ScoreNet((2, 5, 3), activation="tanh" if trial % 3 else "relu")
        params = network.init_params(net, rng)
        for W, _ in params.layers:
            W += rng.normal(0, 0.4, size=W.shape)
        xb = rng.uniform(0, 1, size=(3, 2))
        yb = rng.integers(0, 3, size=3)
        xu = rng.uniform(0, 1, size=(5, 2))
        xa = np.clip(xu + rng.uniform(-0.08, 0.08, size=xu.shape), 0, 1)
        teacher = TeacherOutputs.from_probs(rng.dirichlet(np.ones(3), size=5), tau=1.5)
        cfg = AWRConfig(lam=float(rng.uniform(0.5, 30)),
                        gamma=float(rng.uniform(0.0, 5)))

        pinned = losses.srst_awr_risk(xb, yb, xu, xa, teacher, cfg, net, params,
                                      unit_weight=True)
        uniform = losses.srst_trades_risk(xb, yb, xu, xa, teacher, cfg, net, params)
        assert pinned.value == uniform.value, trial

        bare_cfg = AWRConfig(alpha=cfg.alpha, lam=0.0, gamma=0.0)
        bare = losses.srst_awr_risk(xb, yb, xu, xa, teacher, bare_cfg, net, params)
        ce = losses.ls_cross_entropy(network.forward_var(net, params, xb), yb,
                                     bare_cfg.alpha)
        assert bare.value == ce.value, trial
    print("PASS criterion 7: unit weight reproduces the uniform objective and "
          "lam=gamma=0 reduces to smoothed cross-entropy, bit for bit, 100 batches")


def test_criterion_08_trainer_algebra():
    p = network.ParamSet([(np.array([[1.0]]), np.array([0.0]))])
    g = network.ParamSet([(np.array([[0.5]]), np.array([0.0]))])
    buf = network.ParamSet([(np.array([[0.2]]), np.array([0.0]))])
    new_p, new_buf = trainer.sgd_step(p, g, lr=0.1, momentum_buf=buf,
                                      momentum=0.9, weight_decay=0.1)
    assert new_buf.layers[0][0][0, 0] == pytest.approx(0.78, abs=1e-15)
    assert new_p.layers[0][0][0, 0] == pytest.approx(0.922, abs=1e-15)

    cfg = trainer.TrainConfig()
    schedule = {0: 0.1, 49: 0.1, 50: 0.01, 149: 0.01, 150: 0.001, 199: 0.001}
    for epoch, want in schedule.items():
        assert trainer.lr_at(epoch, cfg) == pytest.approx(want, rel=1e-12), epoch

    net = ScoreNet((2, 4, 2))
    snaps = [network.init_params(net, np.random.default_rng(i)) for i in range(6)]
    avg = snaps[0].copy()
    for k, snap in enumerate(snaps[1:], start=1):
        avg = trainer.swa_update(avg, snap, n_averaged=k)
    for li in range(len(avg.layers)):
        np.testing.assert_allclose(avg.layers[li][0],
                                   np.mean([s.layers[li][0] for s in snaps], axis=0),
                                   atol=1e-12)
        np.testing.assert_allclose(avg.layers[li][1],
                                   np.mean([s.layers[li][1] for s in snaps], axis=0),
                                   atol=1e-12)

    hist = [{"epoch": 0, "rob_acc_val": 0.5}, {"epoch": 1, "rob_acc_val": 0.7},
            {"epoch": 2, "rob_acc_val": 0.7}, {"epoch": 3, "rob_acc_val": 0.6}]
    assert trainer.select_best(hist) == (1, 0.7)
    print("PASS criterion 8: momentum step, schedule, snapshot averaging, and "
          "tie-breaking match hand arithmetic")


DESK_PROFILE = dict(
    source="synthetic_two_moons", n_points=1000, n_labeled=20,
    hidden_widths=(64, 64),
    teacher_lr=0.2, teacher_epochs=1200, teacher_lr_drops=(600, 900),
    strong_cutout=0.0,
    epochs=200, lr_drop_epochs=(100, 160), swa_start_epoch=100,
    lam=12.0, gamma=2.0,
)


def test_criterion_09_directional_end_to_end():
    seeds = (0, 1, 2)
    started = time.perf_counter()
    teacher_acc = {"supervised": [], "fixmatch": []}
    rob = {"srst_awr": [], "srst_trades": [], "trades_rst": []}

    for seed in seeds:
        cfg0 = load_config(None, **DESK_PROFILE)
        spec = cfg0.dataset_spec()
        x, y = data.load_dataset(spec, seed)
        split = data.make_split(x, y, cfg0.split_spec(), seed, spec.class_count)

        stores = {}
        for kind in ("supervised", "fixmatch"):
            cfg = load_config(None, teacher_kind=kind, **DESK_PROFILE)
            net = ScoreNet((2, *cfg.hidden_widths, 2), activation=cfg.activation)
            t_params = presets._train_teacher(cfg, split, net, seed)
            teacher_acc[kind].append(teacher_mod.standard_accuracy(
                net, t_params, split.x_test, split.y_test))
            stores[kind] = teacher_mod.export_soft_labels(
                net, t_params, split.x_unlabeled, cfg.kd_tau, kind=kind, seed=seed)

        for objective, kind in (("srst_awr", "fixmatch"),
                                ("srst_trades", "fixmatch"),
                                ("trades_rst", "supervised")):
            cfg = load_config(None, objective=objective, teacher_kind=kind,
                              **DESK_PROFILE)
            result = trainer.run_training(split, stores[kind], cfg.train_config(seed))
            scores = evaluate(result.net, result.best_params, split.x_test,
                              split.y_test, cfg.eval_config(), seed)
            rob[objective].append(scores["rob_acc_pgd20"])

    elapsed = time.perf_counter() - started
    sup = float(np.mean(teacher_acc["supervised"]))
    fm = float(np.mean(teacher_acc["fixmatch"]))
    awr = float(np.mean(rob["srst_awr"]))
    tra = float(np.mean(rob["srst_trades"]))
    rst = float(np.mean(rob["trades_rst"]))

    assert elapsed < 300.0, f"end-to-end run took {elapsed:.0f}s"
    assert fm - sup >= 0.05, (
        f"semi-supervised teacher gap {fm - sup:+.4f} below 5 points "
        f"(supervised {sup:.4f}, semi-supervised {fm:.4f})")
    assert awr - rst > 0.0, (
        f"weighted student {awr:.4f} does not beat the supervised-teacher "
        f"baseline {rst:.4f}")
    assert awr - tra > 0.0, (
        f"weighted student {awr:.4f} does not beat the uniform-weight "
        f"student {tra:.4f}")
    print(f"PASS criterion 9: teacher gap {fm - sup:+.3f} (>=+0.05); "
          f"weighted {awr:.3f} > pseudo-label baseline {rst:.3f} and "
          f"> uniform weight {tra:.3f}; wall {elapsed:.0f}s < 300s")


MICRO_PRESET_CFG = """
dataset.source = synthetic_gauss_mix
dataset.n_points = 80
dataset.noise = 0.05
split.n_labeled = 8
teacher.kind = supervised
teacher.epochs = 6
teacher.batch_size = 8
train.epochs = 3
train.labeled_batch = 8
train.unlabeled_batch = 16
train.lr_drop_epochs = 2
train.swa_start_epoch = 2
train.hidden_widths = 6
train.attack_steps = 2
train.selection_steps = 2
eval.pgd_steps = 3
eval.restarts = 2
eval.black_box_queries = 10
run.seeds = 0, 1
run.preset = tab5_kd
"""


def test_criterion_10_deterministic_reruns(tmp_path):
    cfg_path = tmp_path / "micro.cfg"
    cfg_path.write_text(MICRO_PRESET_CFG)
    cfg = load_config(str(cfg_path))
    out_a = str(tmp_path / "first")
    out_b = str(tmp_path / "second")
    presets.run_preset(cfg, out_a, threads=1)
    presets.run_preset(cfg, out_b, threads=1)
    compared = []
    for fname in ("metrics.jsonl", "metrics.csv", "plot_tab5_kd.csv"):
        blob_a = open(f"{out_a}/{fname}", "rb").read()
        blob_b = open(f"{out_b}/{fname}", "rb").read()
        assert blob_a == blob_b, f"{fname} differs between identical runs"
        compared.append(fname)
    print(f"PASS criterion 10: repeated preset run byte-identical across "
          f"{', '.join(compared)}")
