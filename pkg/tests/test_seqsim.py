import json

import numpy as np
import pytest

from secjscc.bounds import BlockSchedule
from secjscc.cumfn import CumulativeFn, step_from_rates
from secjscc.errors import FeasibilityError, ValidationError
from secjscc.probkit import Dmc, WiretapKernel, binary_entropy, bsc, identity_channel
from secjscc.rdtool import SourceSpec, distortion_at_rate
from secjscc.seqsim import (AuditReport, DegenerateCodeWarning, SequentialCode, Violation, audit_monotone_leakage,
                            builtin_code, converse_holds, run_exact, sample_distortion)

HALF = SourceSpec.binary_hamming(0.5)
ZERO_L = CumulativeFn.step([0, 1], [0, 0])
FREE_L = CumulativeFn.step([0, 1e-9, 1], [0, np.inf, np.inf])  # no leakage limit after time 0
CONST_Z = Dmc([[1.0], [1.0]])


def noiseless_with(eaves):
    return WiretapKernel.from_marginals(identity_channel(2), eaves)


def pair_quantizer_code():
    """k=2, n=2: nothing in block 1, block 2 sends the first letter of each pair of x1..x4."""
    sched = BlockSchedule.from_crdf(step_from_rates([0.0, 0.5]), 2, 2)
    x = np.array([[(j >> s) & 1 for s in (3, 2, 1, 0)] for j in range(16)])
    dec = np.array([[a, a, b, b] for a in (0, 1) for b in (0, 1)])
    return SequentialCode(sched, 2, 2, 2, 2, (np.zeros((4, 0), int), x[:, [0, 2]]), dec)


def test_identity_channel_blind_eavesdropper():
    G = step_from_rates([1.0])
    w = noiseless_with(CONST_Z)
    rep = run_exact(builtin_code("repeat", HALF, w, G, 1, 2), HALF, w, G, ZERO_L, 0.0)
    assert rep.expected_distortion == 0.0 and rep.leakage == (0.0,) and rep.ok


def test_leak_everything_margin_is_exactly_one():
    G = step_from_rates([1.0])
    w = WiretapKernel.from_cascade(bsc(0.0), identity_channel(2))
    rep = run_exact(builtin_code("repeat", HALF, w, G, 1, 1), HALF, w, G, ZERO_L, 0.0)
    assert rep.violations == (Violation("leakage", 1, 1.0),)
    assert rep.violations[0].margin == 1.0


def test_pair_quantizer_matches_closed_form():
    w = noiseless_with(bsc(0.3))
    G = step_from_rates([0.0, 0.5])
    rep = run_exact(pair_quantizer_code(), HALF, w, G, FREE_L, 0.3)
    assert rep.expected_distortion == 0.25
    # I(X^4; Z^2) = 2 (1 - h(0.3)) bits over nk = 4 letters; mpmath gives 0.059354550384653690888
    assert rep.leakage[0] == 0.0
    assert abs(rep.leakage[1] - 0.059354550384653690888) < 1e-14
    assert audit_monotone_leakage(rep) is None and converse_holds(rep)


def test_builtin_quantizer_meets_converse():
    w = noiseless_with(bsc(0.3))
    G = step_from_rates([0.5])
    rep = run_exact(builtin_code("quantize-and-index", HALF, w, G, 1, 4), HALF, w, G, FREE_L, 1.0)
    assert rep.expected_distortion >= distortion_at_rate(HALF, 0.5) - 1e-9
    assert rep.expected_distortion == 0.25


def test_null_code_gives_d_max():
    w = noiseless_with(bsc(0.3))
    G = step_from_rates([0.5, 0.5])
    src = SourceSpec.binary_hamming(0.2)
    rep = run_exact(builtin_code("null", src, w, G, 2, 2), src, w, G, ZERO_L, 1.0)
    assert abs(rep.expected_distortion - 0.2) < 1e-15
    assert rep.leakage == (0.0, 0.0)


def test_repeat_full_budget_noiseless_is_lossless():
    w = noiseless_with(bsc(0.1))
    G = step_from_rates([1.0, 1.0])
    rep = run_exact(builtin_code("repeat", HALF, w, G, 2, 2), HALF, w, G, FREE_L, 0.0)
    assert rep.expected_distortion == 0.0 and rep.ok


def test_degenerate_budget_warns():
    w = noiseless_with(bsc(0.1))
    with pytest.warns(DegenerateCodeWarning):
        code = builtin_code("quantize-and-index", HALF, w, step_from_rates([0.0]), 1, 2)
    assert code.decoder.shape == (1, 2)


def test_state_space_guard():
    w = noiseless_with(bsc(0.1))
    G = step_from_rates([1.0])
    with pytest.raises(FeasibilityError):
        builtin_code("repeat", HALF, w, G, 1, 13)


def test_schedule_must_match_G():
    w = noiseless_with(bsc(0.1))
    code = builtin_code("repeat", HALF, w, step_from_rates([1.0]), 1, 2)
    with pytest.raises(ValidationError):
        run_exact(code, HALF, w, step_from_rates([0.5]), FREE_L, 1.0)


def test_encoder_lengths_follow_schedule():
    w = noiseless_with(bsc(0.1))
    G = step_from_rates([0.25, 0.75, 0.5])
    code = builtin_code("quantize-and-index", HALF, w, G, 3, 2)
    assert [e.shape[1] for e in code.encoders] == code.schedule.block_lengths()


def test_random_codes_monotone_and_converse(rng):
    src = SourceSpec.binary_hamming(0.3)
    for _ in range(20):
        k, n = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        rates = rng.integers(0, 3, k) / (n * k)
        G = step_from_rates(rates)
        main = Dmc(rng.dirichlet(np.ones(2), size=2))
        w = WiretapKernel.from_marginals(main, Dmc(rng.dirichlet(np.ones(3), size=2)))
        kind = ["quantize-and-index", "repeat", "null"][int(rng.integers(0, 3))]
        with _quiet():
            code = builtin_code(kind, src, w, G, k, n)
        rep = run_exact(code, src, w, G, FREE_L, 1.0)
        assert audit_monotone_leakage(rep) is None
        assert converse_holds(rep)


class _quiet:
    def __enter__(self):
        import warnings
        self._cm = warnings.catch_warnings()
        self._cm.__enter__()
        warnings.simplefilter("ignore", DegenerateCodeWarning)

    def __exit__(self, *exc):
        return self._cm.__exit__(*exc)


def test_forged_decreasing_leakage_flagged():
    rep = AuditReport(0.0, (0.3, 0.2, 0.4), (1, 1, 1), 1.0, (), 0.0, 0.0, 3, 1)
    bad = audit_monotone_leakage(rep)
    assert bad.block == 2
    single = AuditReport(0.0, (0.3,), (1,), 1.0, (), 0.0, 0.0, 1, 1)
    assert audit_monotone_leakage(single) is None


def test_worker_count_does_not_change_report():
    w = noiseless_with(bsc(0.3))
    G = step_from_rates([0.25, 0.25, 0.5])
    code = builtin_code("quantize-and-index", HALF, w, G, 3, 3)
    a = run_exact(code, HALF, w, G, FREE_L, 0.3, workers=1)
    b = run_exact(code, HALF, w, G, FREE_L, 0.3, workers=4)
    assert a.to_json() == b.to_json()


def test_code_serialization_round_trip():
    code = pair_quantizer_code()
    back = SequentialCode.from_dict(json.loads(json.dumps(code.to_dict())))
    assert back.schedule == code.schedule
    assert all(np.array_equal(a, b) for a, b in zip(back.encoders, code.encoders))


def test_sampled_distortion_close_to_exact():
    w = WiretapKernel.from_marginals(bsc(0.1), bsc(0.3))
    G = step_from_rates([0.5])
    code = builtin_code("quantize-and-index", HALF, w, G, 1, 4)
    exact = run_exact(code, HALF, w, G, FREE_L, 1.0).expected_distortion
    est = sample_distortion(code, HALF, w, 40_000, seed=7)
    assert abs(est - exact) < 0.01
    assert est == sample_distortion(code, HALF, w, 40_000, seed=7)


def test_report_csv(tmp_path):
    w = noiseless_with(bsc(0.3))
    rep = run_exact(pair_quantizer_code(), HALF, w, step_from_rates([0.0, 0.5]), FREE_L, 0.3)
    path = tmp_path / "leak.csv"
    rep.to_csv(path)
    assert path.read_text().splitlines()[0] == "i,leakage,L"
