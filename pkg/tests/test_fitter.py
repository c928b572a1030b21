import numpy as np
import pytest

from dpsfit.cohort import (
    BiomarkerSpec,
    Cohort,
    ConstraintPolicy,
    Diagnosis,
    Direction,
    Visit,
)
from dpsfit.curves import CurveParams, LogisticKind, evaluate
from dpsfit.errors import FitError, InitializationError
from dpsfit.fitter import (
    FitConfig,
    FitState,
    FitTrace,
    fit,
    fit_biomarker_step,
    fit_subject_step,
    initialize,
    objective,
)
from dpsfit.progression import SubjectParams, compute_dps, save_model
from dpsfit.resampling import partition_train_test
from dpsfit.robust_loss import LossKind, rho
from dpsfit.synth import SynthBiomarker, SynthSpec, generate

VER = LogisticKind.VERHULST
CN, MCI, AD, MISSING = Diagnosis.CN, Diagnosis.MCI, Diagnosis.AD, Diagnosis.MISSING


def visit(sid, idx, age, dx=MISSING, values=None):
    return Visit(
        subject_id=sid, visit_index=idx, age=age, diagnosis=dx,
        values=dict(values or {}),
    )


def diagnosed_cohort(spec):
    # CN values sit high, AD values low: orientation must come out negative.
    visits = [
        visit("s1", 0, 70.0, CN, {"score": 29.0}),
        visit("s1", 1, 71.0, CN, {"score": 30.0}),
        visit("s2", 0, 74.0, AD, {"score": 20.0}),
        visit("s2", 1, 75.0, AD, {"score": 21.0}),
    ]
    return Cohort(visits, {"score": spec})


def small_frame_spec(**overrides):
    """A cohort whose ages already sit on the curves' active score range.

    The step functions operate in the raw age frame (only ``fit`` centers
    time internally), so these tests keep ages small and onsets near zero
    to make the subproblems well posed from the standard start.
    """
    biomarkers = (
        SynthBiomarker("up", CurveParams(kind=VER, a=1.0, d=0.0, b=1.0, c=1.0), 0.0),
        SynthBiomarker("down", CurveParams(kind=VER, a=0.0, d=2.0, b=0.8, c=2.5), 0.0),
    )
    kwargs = dict(
        biomarkers=biomarkers,
        n_subjects=24,
        alpha_log_sd=0.1,
        beta_mean=-2.0,
        beta_sd=0.8,
        baseline_age_mean=3.0,
        baseline_age_sd=0.8,
        n_visits=5,
        visit_interval=1.0,
        visit_jitter=0.05,
        dx_thresholds=(0.5, 3.0),
        seed=5,
    )
    kwargs.update(overrides)
    return SynthSpec(**kwargs)


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------

def test_initialize_fixed_range_decreasing_biomarker():
    spec = BiomarkerSpec(
        name="score", valid_range=(0.0, 30.0),
        constraint_policy=ConstraintPolicy.FIXED_RANGE,
    )
    state = initialize(diagnosed_cohort(spec), FitConfig(curve_kind=VER))
    p = state.curves["score"]
    assert (p.a, p.d) == (0.0, 30.0)
    assert p.b == pytest.approx(4.0 / 30.0, rel=1e-12)
    assert p.c == 0.0
    assert p.gamma == 1.0


def test_initialize_fixed_range_increasing_biomarker():
    spec = BiomarkerSpec(
        name="score", valid_range=(0.0, 18.0),
        constraint_policy=ConstraintPolicy.FIXED_RANGE,
    )
    visits = [
        visit("s1", 0, 70.0, CN, {"score": 0.5}),
        visit("s1", 1, 71.0, CN, {"score": 1.0}),
        visit("s2", 0, 74.0, AD, {"score": 16.0}),
        visit("s2", 1, 75.0, AD, {"score": 17.0}),
    ]
    state = initialize(Cohort(visits, {"score": spec}), FitConfig(curve_kind=VER))
    p = state.curves["score"]
    assert (p.d, p.a) == (0.0, 18.0)
    assert p.b == pytest.approx(4.0 / 18.0, rel=1e-12)


def test_initialize_free_policy_uses_observed_extremes():
    state = initialize(diagnosed_cohort(BiomarkerSpec(name="score")), FitConfig(curve_kind=VER))
    p = state.curves["score"]
    assert (p.a, p.d) == (20.0, 30.0)
    assert p.b == pytest.approx(4.0 / 10.0, rel=1e-12)
    assert p.b > 0


def test_initialize_subjects_at_identity_timeline():
    state = initialize(diagnosed_cohort(BiomarkerSpec(name="score")), FitConfig())
    assert set(state.subjects) == {"s1", "s2"}
    for sp in state.subjects.values():
        assert (sp.alpha, sp.beta) == (1.0, 0.0)


def test_initialize_sigma_is_sample_standard_deviation():
    state = initialize(diagnosed_cohort(BiomarkerSpec(name="score")), FitConfig())
    assert state.sigma["score"] == pytest.approx(
        np.std([29.0, 30.0, 20.0, 21.0], ddof=1)
    )


def test_initialize_falls_back_to_direction_hint():
    visits = [
        visit("s1", 0, 70.0, MISSING, {"score": 29.0}),
        visit("s1", 1, 71.0, MISSING, {"score": 21.0}),
    ]
    spec = BiomarkerSpec(name="score", direction_hint=Direction.DECREASING)
    state = initialize(Cohort(visits, {"score": spec}), FitConfig(curve_kind=VER))
    p = state.curves["score"]
    assert p.a < p.d
    assert p.b > 0

    bare = Cohort([v.clone() for v in visits], {"score": BiomarkerSpec(name="score")})
    with pytest.raises(InitializationError, match="score"):
        initialize(bare, FitConfig())


def test_initialize_requires_value_spread():
    visits = [
        visit("s1", 0, 70.0, CN, {"score": 5.0}),
        visit("s1", 1, 71.0, AD, {"score": 5.0}),
    ]
    with pytest.raises(InitializationError):
        initialize(Cohort(visits, {"score": BiomarkerSpec(name="score")}), FitConfig())


# ----------------------------------------------------------------------
# the objective
# ----------------------------------------------------------------------

def exact_state(alpha=1.0, beta=0.0, sigma=0.5):
    curve = CurveParams(kind=VER, a=1.0, d=0.0, b=1.0, c=3.0)
    sp = SubjectParams(alpha, beta)
    visits = [
        visit("s1", j, age, MISSING, {"m": evaluate(curve, compute_dps(sp, age))})
        for j, age in enumerate([2.0, 3.0, 4.0, 5.0])
    ]
    cohort = Cohort(visits, {"m": BiomarkerSpec(name="m")})
    state = FitState(curves={"m": curve}, subjects={"s1": sp}, sigma={"m": sigma})
    return state, cohort, curve


def test_objective_zero_for_exact_predictions():
    state, cohort, _ = exact_state()
    assert objective(state, cohort, LossKind.LOGISTIC) == 0.0


def test_objective_equal_residual_arithmetic():
    state, cohort, curve = exact_state(sigma=0.5)
    for v in cohort.visits:
        v.values["m"] += 0.25  # residual / sigma = 0.5 everywhere
    got = objective(state, cohort, LossKind.LOGISTIC)
    # four points, each weighted 1/4, all with the same scaled residual
    assert got == pytest.approx(float(rho(LossKind.LOGISTIC, 0.5)), rel=1e-12)


def test_objective_decreases_when_sigma_doubles():
    state, cohort, _ = exact_state(sigma=0.5)
    for v in cohort.visits:
        v.values["m"] += 0.3
    low = objective(state, cohort, LossKind.L2)
    state.sigma["m"] = 1.0
    assert objective(state, cohort, LossKind.L2) < low


def test_objective_ignores_missing_values():
    state, cohort, _ = exact_state()
    for v in cohort.visits:
        v.values["m"] += 1.0
    with_all = objective(state, cohort, LossKind.L2)
    cohort.visits[0].values["m"] = None
    assert objective(state, cohort, LossKind.L2) < with_all


# ----------------------------------------------------------------------
# single steps
# ----------------------------------------------------------------------

def tight_config(**overrides):
    kwargs = dict(
        curve_kind=VER, loss_kind=LossKind.LOGISTIC,
        l_min=1, l_max=1, inner_solver_tol=1e-12, inner_max_steps=500,
    )
    kwargs.update(overrides)
    return FitConfig(**kwargs)


def test_biomarker_step_recovers_noiseless_curves():
    cohort, truth = generate(small_frame_spec(n_subjects=60, n_visits=8))
    config = tight_config()
    state = initialize(cohort, config)
    state.subjects = dict(truth.subjects)
    fit_biomarker_step(state, cohort, config)
    for name, want in truth.curves.items():
        got = state.curves[name]
        for attr in ("a", "d", "b", "c"):
            assert getattr(got, attr) == pytest.approx(
                getattr(want, attr), rel=1e-6, abs=1e-6
            ), (name, attr)


def test_biomarker_step_respects_fixed_range_and_descends():
    cohort, truth = generate(small_frame_spec(n_subjects=30))
    cohort.specs["up"] = BiomarkerSpec(
        name="up", valid_range=(0.0, 1.0),
        constraint_policy=ConstraintPolicy.FIXED_RANGE,
        direction_hint=Direction.INCREASING,
    )
    config = tight_config()
    state = initialize(cohort, config)
    before = objective(state, cohort, config.loss_kind)
    fit_biomarker_step(state, cohort, config)
    assert state.curves["up"].a == 1.0
    assert state.curves["up"].d == 0.0
    assert objective(state, cohort, config.loss_kind) <= before + 1e-12


def test_subject_step_recovers_noiseless_timelines():
    cohort, truth = generate(small_frame_spec(n_subjects=20))
    config = tight_config()
    state = initialize(cohort, config)
    state.curves = dict(truth.curves)
    state.sigma = {name: 0.25 for name in state.sigma}
    fit_subject_step(state, cohort, config)
    for sid, want in truth.subjects.items():
        got = state.subjects[sid]
        assert got.alpha == pytest.approx(want.alpha, rel=1e-4)
        assert got.beta == pytest.approx(want.beta, rel=1e-4, abs=1e-4)


def test_subject_step_descends():
    cohort, truth = generate(small_frame_spec(seed=9))
    config = tight_config()
    state = initialize(cohort, config)
    state.curves = dict(truth.curves)
    before = objective(state, cohort, config.loss_kind)
    fit_subject_step(state, cohort, config)
    assert objective(state, cohort, config.loss_kind) <= before + 1e-12


def test_subject_step_warns_and_freezes_sparse_subject():
    cohort, truth = generate(small_frame_spec(n_subjects=6))
    lone = visit("zz_lone", 0, 3.0, MISSING, {"up": 0.6})
    cohort = Cohort(list(cohort.visits) + [lone], cohort.specs)
    config = tight_config()
    state = initialize(cohort, config)
    state.curves = dict(truth.curves)
    with pytest.warns(UserWarning, match="zz_lone"):
        fit_subject_step(state, cohort, config)
    assert state.subjects["zz_lone"] == SubjectParams(1.0, 0.0)


def test_steps_invariant_to_visit_order():
    cohort, _ = generate(small_frame_spec(n_subjects=10))
    shuffled = Cohort(list(reversed(cohort.visits)), cohort.specs)
    config = tight_config()
    states = []
    for c in (cohort, shuffled):
        state = initialize(c, config)
        fit_biomarker_step(state, c, config)
        fit_subject_step(state, c, config)
        states.append(state)
    assert states[0].curves == states[1].curves
    assert states[0].subjects == states[1].subjects


def test_alternation_training_loss_never_rises():
    cohort, _ = generate(
        small_frame_spec(
            n_subjects=16,
            biomarkers=(
                SynthBiomarker("up", CurveParams(kind=VER, a=1.0, d=0.0, b=1.0, c=1.0), 0.05),
                SynthBiomarker("down", CurveParams(kind=VER, a=0.0, d=2.0, b=0.8, c=2.5), 0.08),
            ),
        )
    )
    config = tight_config(inner_solver_tol=1e-8, inner_max_steps=200)
    state = initialize(cohort, config)
    last = objective(state, cohort, config.loss_kind)
    for _ in range(6):
        fit_biomarker_step(state, cohort, config)
        after_curves = objective(state, cohort, config.loss_kind)
        assert after_curves <= last + 1e-12
        fit_subject_step(state, cohort, config)
        after_subjects = objective(state, cohort, config.loss_kind)
        assert after_subjects <= after_curves + 1e-12
        last = after_subjects


# ----------------------------------------------------------------------
# the full fit
# ----------------------------------------------------------------------

def noisy_split(seed=5, **overrides):
    spec = small_frame_spec(
        biomarkers=(
            SynthBiomarker("up", CurveParams(kind=VER, a=1.0, d=0.0, b=1.0, c=1.0), 0.04),
            SynthBiomarker("down", CurveParams(kind=VER, a=0.0, d=2.0, b=0.8, c=2.5), 0.06),
        ),
        seed=seed,
        **overrides,
    )
    cohort, truth = generate(spec)
    train, valid = partition_train_test(cohort, test_fraction=0.2, seed=11)
    return train, valid, truth


def test_fit_trace_and_snapshot_selection():
    train, valid, _ = noisy_split()
    config = FitConfig(curve_kind=VER, loss_kind=LossKind.LOGISTIC, l_min=3, l_max=10)
    model, trace = fit(train, valid, config, progress=False)

    assert len(trace.e_train) == len(trace.e_valid) == config.l_max
    diffs = np.diff(trace.e_train)
    assert np.all(diffs <= 1e-12)

    window = trace.e_valid[config.l_min - 1:]
    assert trace.l_opt == config.l_min + int(np.argmin(window))
    assert model.provenance["l_opt"] == trace.l_opt
    assert model.provenance["e_valid_opt"] == trace.e_valid[trace.l_opt - 1]
    assert model.provenance["e_train_opt"] == trace.e_train[trace.l_opt - 1]
    assert model.provenance["n_subjects"] == len(train.subject_ids())


def test_fit_is_deterministic(tmp_path):
    train, valid, _ = noisy_split()
    config = FitConfig(curve_kind=VER, loss_kind=LossKind.LOGISTIC, l_min=2, l_max=6)
    model1, trace1 = fit(train, valid, config, progress=False)
    model2, trace2 = fit(train, valid, config, progress=False)
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    save_model(model1, paths[0])
    save_model(model2, paths[1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert trace1.e_train == trace2.e_train
    assert trace1.e_valid == trace2.e_valid


def test_fit_standardizes_training_cn_scores():
    train, valid, _ = noisy_split()
    config = FitConfig(curve_kind=VER, loss_kind=LossKind.LOGISTIC, l_min=2, l_max=6)
    model, _ = fit(train, valid, config, progress=False)
    assert model.standardization.applied
    scores = [
        compute_dps(model.subjects[v.subject_id], v.age)
        for v in train.visits
        if v.diagnosis is CN and v.subject_id in model.subjects
    ]
    assert len(scores) >= 2
    assert abs(np.mean(scores)) <= 1e-8
    assert abs(np.std(scores) - 1.0) <= 1e-8


def test_fit_without_cn_visits_skips_standardization():
    train, valid, _ = noisy_split(dx_thresholds=(-50.0, -40.0))  # every visit AD
    config = FitConfig(curve_kind=VER, loss_kind=LossKind.LOGISTIC, l_min=1, l_max=3)
    with pytest.warns(UserWarning, match="unstandardized"):
        model, trace = fit(train, valid, config, progress=False)
    assert not model.standardization.applied
    assert any("unstandardized" in w for w in trace.warnings)


def test_fit_flags_constant_data_subject():
    train, valid, truth = noisy_split(n_subjects=14)
    sid = train.subject_ids()[0]
    for v in train.visits:
        if v.subject_id == sid:
            for name in v.values:
                v.values[name] = 0.5 if name == "up" else 1.0  # both curve midpoints
    config = FitConfig(curve_kind=VER, loss_kind=LossKind.LOGISTIC, l_min=1, l_max=4)
    with pytest.warns(UserWarning, match="constant"):
        model, trace = fit(train, valid, config, progress=False)
    assert any(sid in w and "constant" in w for w in trace.warnings)
    rates = sorted(sp.alpha for sp in model.subjects.values())
    assert model.subjects[sid].alpha == rates[0]
    assert model.subjects[sid].alpha < 0.25 * float(np.median(rates))


def test_fit_rejects_underdetermined_cohort():
    visits = [
        visit("s1", 0, 70.0, CN, {"m": 1.0}),
        visit("s1", 1, 71.0, CN, {"m": 2.0}),
        visit("s2", 0, 72.0, AD, {"m": 9.0}),
        visit("s2", 1, 73.0, AD, {"m": 8.0}),
    ]
    train = Cohort(visits, {"m": BiomarkerSpec(name="m")})
    valid = Cohort([v.clone() for v in visits], dict(train.specs))
    with pytest.raises(FitError, match="degrees of freedom"):
        fit(train, valid, FitConfig(curve_kind=VER), progress=False)


def test_fit_prints_progress_lines(capsys):
    train, valid, _ = noisy_split(n_subjects=10)
    config = FitConfig(curve_kind=VER, loss_kind=LossKind.LOGISTIC, l_min=1, l_max=2)
    fit(train, valid, config, progress=True)
    err = capsys.readouterr().err
    assert "iter   1" in err and "E_train=" in err and "E_valid=" in err


def test_trace_csv_round_trip(tmp_path):
    trace = FitTrace(e_train=[3.25, 1.125], e_valid=[4.5, 2.75], l_opt=2)
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,E_train,E_valid"
    assert lines[1].split(",") == ["1", "3.25", "4.5"]
    assert [float(x) for x in lines[2].split(",")] == [2.0, 1.125, 2.75]


def test_affine_reparameterized_inits_agree():
    cohort, _ = generate(small_frame_spec(n_subjects=18))
    config = tight_config(inner_solver_tol=1e-10, inner_max_steps=300)

    def run(state):
        for _ in range(10):
            fit_biomarker_step(state, cohort, config)
            fit_subject_step(state, cohort, config)
        preds = {}
        for v in sorted(cohort.visits, key=lambda v: (v.subject_id, v.visit_index)):
            s = compute_dps(state.subjects[v.subject_id], v.age)
            for name in sorted(v.values):
                if v.values[name] is not None:
                    preds.setdefault(name, []).append(evaluate(state.curves[name], s))
        return preds

    base = initialize(cohort, config)
    m, h = 2.0, 1.5  # scores remapped as (s - h) / m
    warped = FitState(
        curves={
            name: p.replace(b=p.b * m, c=(p.c - h) / m)
            for name, p in base.curves.items()
        },
        subjects={
            sid: SubjectParams(sp.alpha / m, (sp.beta - h) / m)
            for sid, sp in base.subjects.items()
        },
        sigma=dict(base.sigma),
    )
    preds0 = run(base)
    preds1 = run(warped)
    for name in preds0:
        a, b = np.array(preds0[name]), np.array(preds1[name])
        nmae = np.mean(np.abs(a - b)) / np.std(b)
        assert nmae <= 1e-4, name
