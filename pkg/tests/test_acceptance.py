"""End-to-end acceptance battery, one test per numbered criterion.

Each test prints its verdict line before asserting, so measured values
survive in the captured output even when an assertion trips. Seeds are
fixed; every number here reproduces bit for bit.
"""

from fractions import Fraction

import numpy as np

from moeqkd import quantum as q
from moeqkd.entropy import CqEnsemble, chain_rule_check, helstrom_binary, pguess
from moeqkd.game import (
    BUILTIN_STRATEGIES,
    decomposition_terms,
    exact_pwin,
    sampled_pwin,
    verify_fixed_theta_bound,
    verify_random_theta_bound,
)
from moeqkd.harness import rng_substream
from moeqkd.hashing import ExtractorSpec, extractor_distance, uh_collision_probability
from moeqkd.nike import BrokenNike, IdealNike, ToyDhNike
from moeqkd.nogo import (
    ClassicalKeyProtocol,
    affine_hash_key_function,
    attack_success_rate,
    eve_online,
    nogo_bound,
)
from moeqkd.protocols import (
    run_niqkd,
    run_two_round,
    swap_epr_attack,
    weak_security_report,
)

SWAP_IDEAL_HMIN = 1.435813659854  # exhaustive-construction regression value


def _verdict(idx: int, ok: bool, detail: str) -> None:
    print(f"criterion {idx:02d}: {'PASS' if ok else 'FAIL'} - {detail}")


def _divisors(n: int) -> list[int]:
    return [s for s in range(1, n + 1) if n % s == 0]


def test_criterion_01_operator_lemma_suite():
    rng = rng_substream(101, 0)
    worst = np.inf
    for _ in range(200):
        k = int(rng.integers(1, 4))
        projs = [q.random_projector(d := int(rng.integers(2, 5)),
                                    int(rng.integers(0, d + 1)), rng)
                 for _ in range(k)]
        worst = min(worst, q.operator_union_bound_witness(projs))

    pair = (
        np.outer(q.bell_state("phi+"), q.bell_state("phi+").conj())
        + 0.5 * np.outer(q.bell_state("phi-"), q.bell_state("phi-").conj())
        + 0.5 * np.outer(q.bell_state("psi+"), q.bell_state("psi+").conj())
    )
    dev_avg = 0.0
    for n in (1, 2, 3):
        avg = np.zeros((1 << (2 * n),) * 2, dtype=complex)
        for ti in range(1 << n):
            avg += q.agreement_projector(q.int_to_bits(ti, n))
        avg /= 1 << n
        rhs = np.eye(1 << (2 * n), dtype=complex)
        for i in range(n):
            rhs = rhs @ q.embed_operator(pair, [i, n + i], 2 * n)
        dev_avg = max(dev_avg, float(np.abs(avg - rhs).max()))

    dev_epr = 0.0
    for n in (1, 2, 3, 4):
        epr = q.epr_block_state(n)
        for ti in range(1 << n):
            p = q.agreement_projector(q.int_to_bits(ti, n))
            dev_epr = max(dev_epr, float(np.abs(p @ epr - epr).max()))

    ok = worst >= -1e-9 and dev_avg <= 1e-12 and dev_epr <= 1e-12
    _verdict(1, ok, f"union witness min {worst:.3e}, basis-average dev "
                    f"{dev_avg:.3e}, shared-pair support dev {dev_epr:.3e}")
    assert worst >= -1e-9
    assert dev_avg <= 1e-12
    assert dev_epr <= 1e-12


def test_criterion_02_bound_suite():
    rng = rng_substream(102, 0)
    viol_rand = 0
    margin_rand = np.inf
    for i in range(500):
        n = (1, 2, 3, 4)[i % 4]
        s = _divisors(n)[int(rng.integers(0, len(_divisors(n))))]
        rho = q.random_density_operator(4**n, rng)
        value, bound, _ = verify_random_theta_bound(rho, s)
        margin_rand = min(margin_rand, bound - value)
        viol_rand += value > bound + 1e-9

    viol_fixed = 0
    margin_fixed = np.inf
    for i in range(500):
        n = (1, 2, 3)[i % 3]
        s = _divisors(n)[int(rng.integers(0, len(_divisors(n))))]
        rho = q.random_density_operator(4**n * 2, rng)
        povm = q.random_povm(2, 2**n, rng)
        theta = tuple(int(b) for b in rng.integers(0, 2, n))
        value, bound, _ = verify_fixed_theta_bound(rho, povm, theta, s)
        margin_fixed = min(margin_fixed, bound - value)
        viol_fixed += value > bound + 1e-9

    ok = viol_rand == 0 and viol_fixed == 0
    _verdict(2, ok, f"500 random-basis states: {viol_rand} violations (min "
                    f"margin {margin_rand:.3e}); 500 fixed-basis states: "
                    f"{viol_fixed} violations (min margin {margin_fixed:.3e})")
    assert viol_rand == 0
    assert viol_fixed == 0


def test_criterion_03_game_exactness():
    res_h = exact_pwin(IdealNike(2), BUILTIN_STRATEGIES["honest"](2), 2)
    res_i = exact_pwin(IdealNike(2), BUILTIN_STRATEGIES["intercept_resend"](2), 2)
    res_b = exact_pwin(BrokenNike(2), BUILTIN_STRATEGIES["basis_reading"](2), 2)
    mc_h = sampled_pwin(IdealNike(2), BUILTIN_STRATEGIES["honest"](2), 2,
                        10_000, rng_substream(103, 0))
    mc_i = sampled_pwin(IdealNike(2), BUILTIN_STRATEGIES["intercept_resend"](2), 2,
                        10_000, rng_substream(103, 1))

    ok = (abs(res_h.pwin - 0.25) <= 1e-9
          and abs(res_i.pwin - 0.25) <= 1e-9
          and abs(res_i.agree_rate - 0.25) <= 1e-9
          and abs(res_b.pwin - 1.0) <= 1e-9
          and abs(mc_h.pwin - res_h.pwin) <= 3 * mc_h.stderr
          and abs(mc_i.pwin - res_i.pwin) <= 3 * mc_i.stderr)
    _verdict(3, ok, f"exact honest {res_h.pwin:.12f}, intercept {res_i.pwin:.12f} "
                    f"(agree {res_i.agree_rate:.12f}), published-basis read "
                    f"{res_b.pwin:.12f}; MC {mc_h.pwin:.4f}/{mc_i.pwin:.4f}")
    assert abs(res_h.pwin - 0.25) <= 1e-9
    assert abs(res_h.agree_rate - 1.0) <= 1e-9
    assert abs(res_i.pwin - 0.25) <= 1e-9
    assert abs(res_i.agree_rate - 0.25) <= 1e-9
    assert abs(res_b.pwin - 1.0) <= 1e-9
    assert abs(mc_h.pwin - 0.25) <= 3 * mc_h.stderr
    assert abs(mc_i.pwin - 0.25) <= 3 * mc_i.stderr


def test_criterion_04_decomposition_identity():
    # the three-way split certifies its own sum against two direct routes
    # at 1e-9 and raises on any mismatch, so surviving the calls is the check
    checks = 0
    for n in (2, 3):
        for name in ("honest", "intercept_resend", "basis_reading"):
            strat = BUILTIN_STRATEGIES[name](n)
            for ti in range(1 << n):
                theta = q.int_to_bits(ti, n)
                p = (("broken", n, theta), "pk-a", "pk-b")
                psi = strat.prep(p)
                for s in _divisors(n):
                    decomposition_terms(psi, p, theta, s, strat.charlie_povm)
                    checks += 1

    comm = 0.0
    for n in (2, 3):
        for s in _divisors(n):
            _, m1 = q.block_projectors(n, s)
            for ti in range(1 << n):
                p = q.agreement_projector(q.int_to_bits(ti, n))
                comm = max(comm, float(np.abs(p @ m1 - m1 @ p).max()))

    ok = comm <= 1e-10
    _verdict(4, ok, f"{checks} three-term splits certified at 1e-9; "
                    f"max commutator entry {comm:.3e}")
    assert checks == 72
    assert comm <= 1e-10


def test_criterion_05_min_entropy_certification():
    rng = rng_substream(105, 0)
    width = 0.0
    for dim in (2, 4, 8, 16, 64):
        for _ in range(5 if dim < 64 else 1):
            k = int(rng.integers(2, 5)) if dim < 64 else 2
            probs = rng.dirichlet(np.ones(k))
            states = [q.random_density_operator(dim, rng) for _ in range(k)]
            br = pguess(CqEnsemble(list(range(k)), probs, states))
            width = max(width, br.gap)

    hel_dev = 0.0
    for i in range(100):
        dim = 2 if i % 2 else 4
        p0 = float(rng.uniform(0.05, 0.95))
        rho0 = q.random_density_operator(dim, rng)
        rho1 = q.random_density_operator(dim, rng)
        br = pguess(CqEnsemble([0, 1], np.array([p0, 1 - p0]), [rho0, rho1]))
        center = 0.5 * (br.lower + br.upper)
        hel_dev = max(hel_dev, abs(center - helstrom_binary(p0, rho0, 1 - p0, rho1)))

    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    br = pguess(CqEnsemble([0, 1], np.array([0.5, 0.5]),
                           [np.diag([1.0, 0.0]), np.outer(plus, plus)]))
    zero_plus = 0.5 * (br.lower + br.upper)
    target = 0.5 + 0.5 / np.sqrt(2)

    chain_held = 0
    for i in range(100):
        b_dim = 2 if i % 2 else 4
        k = int(rng.integers(2, 4))
        probs = rng.dirichlet(np.ones(k))
        states = [q.random_density_operator(2 * b_dim, rng) for _ in range(k)]
        res = chain_rule_check(CqEnsemble(list(range(k)), probs, states), 2)
        chain_held += res.holds

    ok = (width <= 1e-6 and hel_dev <= 1e-6
          and abs(zero_plus - target) <= 1e-6 and chain_held == 100)
    _verdict(5, ok, f"max bracket width {width:.3e}, binary closed-form dev "
                    f"{hel_dev:.3e}, standard/diagonal pair {zero_plus:.6f}, "
                    f"chain rule {chain_held}/100")
    assert width <= 1e-6
    assert hel_dev <= 1e-6
    assert abs(zero_plus - target) <= 1e-6
    assert chain_held == 100


def test_criterion_06_protocol_correctness():
    rng = rng_substream(106, 0)
    per_scheme = {}
    for scheme in (IdealNike(2), ToyDhNike(2), BrokenNike(2)):
        good = 0
        for _ in range(1000):
            tx = run_niqkd(scheme, 2, None, rng)
            good += tx.k_a is not None and tx.k_a == tx.k_b
        per_scheme[scheme.name] = good

    good2 = 0
    scheme = IdealNike(2)
    for _ in range(1000):
        tx = run_two_round(scheme, 2, 2, None, rng)
        good2 += tx.kstar_a is not None and tx.kstar_a == tx.kstar_b

    ok = all(v == 1000 for v in per_scheme.values()) and good2 == 1000
    _verdict(6, ok, f"one-round agreement {per_scheme}, "
                    f"two-round agreement {good2}/1000")
    assert per_scheme == {"ideal": 1000, "toydh": 1000, "broken": 1000}
    assert good2 == 1000


def test_criterion_07_swap_attack_reproduction():
    rng = rng_substream(107, 0)
    scheme = ToyDhNike(2)
    adv = swap_epr_attack(2)
    trials = 10_000
    rec_a = rec_b = agree = 0
    for _ in range(trials):
        tx = run_niqkd(scheme, 2, adv, rng)
        ga, gb = adv.decoder(tx, rng)
        rec_a += ga == tx.k_a
        rec_b += gb == tx.k_b
        agree += tx.k_a == tx.k_b
    rate = agree / trials
    sigma = np.sqrt(0.25 * 0.75 / trials)

    ok = rec_a == trials and rec_b == trials and abs(rate - 0.25) <= 3 * sigma
    _verdict(7, ok, f"decoder recovered sender key {rec_a}/{trials} and "
                    f"receiver key {rec_b}/{trials}; agreement {rate:.4f} "
                    f"vs 0.25 (3 sigma = {3 * sigma:.4f})")
    assert rec_a == trials
    assert rec_b == trials
    assert abs(rate - 0.25) <= 3 * sigma


def test_criterion_08_weak_everlasting_exact_instances():
    rep0 = weak_security_report(IdealNike(2), 2, None, rng_substream(108, 0))
    rep1 = weak_security_report(IdealNike(2), 2, swap_epr_attack(2),
                                rng_substream(108, 1))
    hm = rep1.hmin_lower

    ok = (rep0.hmin_lower >= 2 - 1e-6 and rep0.hmin_upper <= 2 + 1e-6
          and hm >= 1.9)
    _verdict(8, ok, f"passive key entropy bracket [{rep0.hmin_lower:.9f}, "
                    f"{rep0.hmin_upper:.9f}]; swap-channel exact value "
                    f"{hm:.12f} (required >= 1.9, regression pin "
                    f"{SWAP_IDEAL_HMIN})")
    assert rep0.hmin_lower >= 2 - 1e-6
    assert rep0.hmin_upper <= 2 + 1e-6
    # regression pin from two independent exhaustive constructions
    assert abs(hm - SWAP_IDEAL_HMIN) <= 1e-6
    assert hm >= 1.9, (
        f"exact swap-channel ensemble gives {hm:.12f} bits, below the 1.9 "
        f"floor; the value is regression-pinned and the shortfall is analyzed "
        f"in the project notes"
    )


def test_criterion_09_two_round_verifiability():
    rng = rng_substream(109, 0)
    scheme = IdealNike(2)
    adv = (swap_epr_attack(2), None)
    trials = 10_000
    mismatches = 0
    for _ in range(trials):
        tx = run_two_round(scheme, 2, 16, adv, rng)
        # None == None counts as agreement, so both-bot runs never land here
        mismatches += tx.kstar_a != tx.kstar_b

    ok = mismatches == 0
    _verdict(9, ok, f"{mismatches} undetected disagreements over {trials} "
                    f"runs at digest length 16 (collision budget 4*2^-16 per run)")
    assert mismatches == 0


def test_criterion_10_universality_and_extraction():
    bad = 0
    checks = 0
    for n in range(1, 9):
        for x in range(1 << n):
            for y in range(x + 1, 1 << n):
                for ell in range(1, n + 1):
                    checks += 1
                    if uh_collision_probability(n, ell, x, y) != Fraction(1, 1 << ell):
                        bad += 1

    rng = rng_substream(110, 0)
    worst = -np.inf
    specs = 0
    trivial = [np.eye(1, dtype=complex)]
    for n in (2, 4, 6):
        for ell in range(1, n + 1):
            for k in range(ell + 1, n + 1):
                eps = 2.0 ** (-(k - ell) / 2)
                spec = ExtractorSpec(n, ell, float(k), eps)
                supports = [
                    np.arange(1 << k),
                    np.arange(0, 1 << n, 1 << (n - k)),
                    rng.choice(1 << n, size=1 << k, replace=False),
                ]
                for sup in supports:
                    probs = np.zeros(1 << n)
                    probs[sup] = 1.0 / (1 << k)
                    d = extractor_distance(spec, probs, trivial * (1 << n))
                    worst = max(worst, d - eps)
                    specs += 1

    ok = bad == 0 and worst <= 1e-12
    _verdict(10, ok, f"{checks} collision probabilities all exactly 2^-l "
                     f"({bad} off); {specs} flat-source extractions, worst "
                     f"distance-minus-target {worst:.3e}")
    assert bad == 0
    assert worst <= 1e-12


def test_criterion_11_classical_key_attack_bound():
    kf = affine_hash_key_function(64, 4, rng_substream(111, 0))
    proto = ClassicalKeyProtocol(kf)

    rng = rng_substream(111, 1)
    undisturbed = 0
    probes_each = 0
    for _ in range(300):
        r_a = proto.sample_randomness(rng)
        r_b = proto.sample_randomness(rng)
        pa = proto.prepare_payload("A", r_a)
        pb = proto.prepare_payload("B", r_b)
        state, pa, pb = eve_online(proto, proto.public_part(r_a),
                                   proto.public_part(r_b), pa, pb, rng)
        k_b, pa = proto.measure_payload(pa, r_b)
        k_a, pb = proto.measure_payload(pb, r_a)
        undisturbed += k_a == k_b == kf.value(r_a, r_b)
        probes_each = len(state.alphas) + len(state.betas)

    res = attack_success_rate(proto, 10_000, rng_substream(111, 2))
    floor = nogo_bound(64)

    ok = (undisturbed == 300 and res.failures == 0
          and res.rate >= floor - 3 * res.stderr)
    _verdict(11, ok, f"guess rate {res.rate:.4f} vs floor {floor:.10f} "
                     f"(1/3 - 2*(8/9)^64), offline failures {res.failures}; "
                     f"keys undisturbed {undisturbed}/300 under "
                     f"{probes_each} in-transit probes per run")
    assert undisturbed == 300
    assert res.failures == 0
    assert abs(res.bound - floor) <= 1e-15
    assert res.rate >= floor - 3 * res.stderr
