import numpy as np
import pytest

import moeqkd.nogo as nogo
from moeqkd.hashing import gf_mul
from moeqkd.nogo import (
    AttackState,
    ClassicalKeyProtocol,
    affine_hash_key_function,
    affine_key_function,
    attack_success_rate,
    eve_offline,
    eve_online,
    gamma_membership,
    nogo_bound,
    run_toy_protocol,
    table_key_function,
    xor_trunc_key_function,
)

CHI2_CRIT_31DOF = 61.098  # 0.999 quantile


def intercepted_run(proto, rng):
    """Full pipeline with interception in transit; returns everything logged."""
    r_a = proto.sample_randomness(rng)
    r_b = proto.sample_randomness(rng)
    pa = proto.prepare_payload("A", r_a)
    pb = proto.prepare_payload("B", r_b)
    state, pa, pb = eve_online(
        proto, proto.public_part(r_a), proto.public_part(r_b), pa, pb, rng
    )
    k_b, pa = proto.measure_payload(pa, r_b)
    k_a, pb = proto.measure_payload(pb, r_a)
    assert k_a == k_b
    return r_a, r_b, k_a, state


def test_honest_runs_reproduce_key_from_logged_randomness():
    rng = np.random.default_rng(40)
    protos = [
        ClassicalKeyProtocol(xor_trunc_key_function(8, 3), s_bits=2),
        ClassicalKeyProtocol(table_key_function(8, 2, rng)),
        ClassicalKeyProtocol(affine_hash_key_function(8, 4, rng)),
    ]
    for proto in protos:
        for _ in range(200):
            r_a, r_b, s_a, s_b, key = run_toy_protocol(proto, rng)
            assert key is not None
            assert key == proto.key_function.value(r_a, r_b)
            assert s_a == proto.public_part(r_a)
    # the xor family admits a direct algebraic check
    proto = protos[0]
    r_a, r_b, s_a, _, key = run_toy_protocol(proto, rng)
    assert key == (r_a ^ r_b) >> 5
    assert s_a == r_a >> 6


def test_payloads_pass_through_interception_untouched():
    rng = np.random.default_rng(41)
    proto = ClassicalKeyProtocol(table_key_function(8, 2, rng))
    for _ in range(200):
        r_a = proto.sample_randomness(rng)
        r_b = proto.sample_randomness(rng)
        pa = proto.prepare_payload("A", r_a)
        pb = proto.prepare_payload("B", r_b)
        before = (pa.serialize(), pb.serialize())
        state, pa2, pb2 = eve_online(proto, 0, 0, pa, pb, rng)
        assert (pa2.serialize(), pb2.serialize()) == before
        # honest parties measure the forwarded registers and still agree
        k_b, _ = proto.measure_payload(pa2, r_b)
        k_a, _ = proto.measure_payload(pb2, r_a)
        assert k_a == k_b == proto.key_function.value(r_a, r_b)


def test_online_observations_are_deterministic_replays():
    rng = np.random.default_rng(42)
    proto = ClassicalKeyProtocol(table_key_function(6, 2, rng))
    r_a, r_b, _, state = intercepted_run(proto, rng)
    assert len(state.alphas) == proto.probes == 12
    for rb_t, a_t in zip(state.sampled_rb, state.alphas):
        assert a_t == proto.key_function.value(r_a, rb_t)
    for ra_t, b_t in zip(state.sampled_ra, state.betas):
        assert b_t == proto.key_function.value(ra_t, r_b)


def test_candidate_sets_contain_the_real_coins():
    rng = np.random.default_rng(43)
    table_proto = ClassicalKeyProtocol(table_key_function(8, 2, rng))
    affine_proto = ClassicalKeyProtocol(affine_hash_key_function(8, 3, rng))
    for proto in (table_proto, affine_proto):
        for _ in range(30):
            r_a, r_b, key, state = intercepted_run(proto, rng)
            guess = eve_offline(proto, state, rng)
            assert gamma_membership(proto.key_function, state, "a", r_a)
            assert gamma_membership(proto.key_function, state, "b", r_b)
            if isinstance(state.gamma_a, np.ndarray):
                assert r_a in state.gamma_a
                assert r_b in state.gamma_b
            else:
                assert state.gamma_a(r_a) and state.gamma_b(r_b)
            assert gamma_membership(proto.key_function, state, "a", state.r_star_a)
            assert gamma_membership(proto.key_function, state, "b", state.r_star_b)
            assert guess == key


def test_full_rank_linear_map_pins_both_coins():
    rng = np.random.default_rng(44)
    r = 8
    # unit lower-triangular columns make the map invertible by construction
    cols = tuple((1 << j) | (int(rng.integers(0, 1 << j)) if j else 0) for j in range(r))
    proto = ClassicalKeyProtocol(affine_key_function(r, r, cols, cols))
    for _ in range(50):
        r_a, r_b, key, state = intercepted_run(proto, rng)
        guess = eve_offline(proto, state, rng, method="enumeration")
        assert state.gamma_a.tolist() == [r_a]
        assert state.gamma_b.tolist() == [r_b]
        assert guess == key
    res = attack_success_rate(proto, 50, rng)
    assert res.rate == 1.0


def test_constant_function_leaves_full_candidate_space():
    rng = np.random.default_rng(45)
    kf = affine_key_function(6, 2, [0] * 6, [0] * 6, const=3)
    proto = ClassicalKeyProtocol(kf)
    _, _, key, state = intercepted_run(proto, rng)
    guess = eve_offline(proto, state, rng, method="enumeration")
    assert key == 3 and guess == 3
    assert state.gamma_a.size == 64
    res = attack_success_rate(proto, 50, rng)
    assert res.rate == 1.0


def test_attack_is_exact_for_affine_families():
    # constraints pin the key-determining projections, so the guess is certain
    rng = np.random.default_rng(46)
    res = attack_success_rate(ClassicalKeyProtocol(xor_trunc_key_function(8, 3)), 200, rng)
    assert res.rate == 1.0 and res.failures == 0
    res = attack_success_rate(ClassicalKeyProtocol(affine_hash_key_function(8, 4, rng)), 200, rng)
    assert res.rate == 1.0
    res = attack_success_rate(ClassicalKeyProtocol(affine_hash_key_function(16, 4, rng)), 100, rng)
    assert res.rate == 1.0


def test_attack_rate_table_regressions():
    rng = np.random.default_rng(47)
    res = attack_success_rate(ClassicalKeyProtocol(table_key_function(8, 2, rng)), 300, rng)
    assert res.rate == 1.0
    res = attack_success_rate(ClassicalKeyProtocol(table_key_function(10, 2, rng)), 2000, rng)
    assert res.rate == 1.0
    assert res.bound == 0.0  # vacuous floor at r = 10, empirical rate far above
    res = attack_success_rate(ClassicalKeyProtocol(table_key_function(12, 2, rng)), 100, rng)
    assert res.rate == 1.0


def test_one_bit_keys_clear_the_guessing_floor():
    rng = np.random.default_rng(48)
    res = attack_success_rate(ClassicalKeyProtocol(table_key_function(8, 1, rng)), 300, rng)
    assert res.rate >= 0.5


def test_r_star_a_uniform_over_candidate_set():
    # one probe of the truncated-xor family pins exactly the top bit, so the
    # candidate set has 32 members whatever the observations were
    rng = np.random.default_rng(49)
    proto = ClassicalKeyProtocol(xor_trunc_key_function(6, 1), t_samples=1)
    assert proto.probes == 1
    _, _, _, state = intercepted_run(proto, rng)
    for method in ("enumeration", "affine"):
        counts = {}
        for _ in range(6400):
            eve_offline(proto, state, rng, method=method)
            counts[state.r_star_a] = counts.get(state.r_star_a, 0) + 1
        assert len(counts) == 32
        chi2 = sum((c - 200) ** 2 / 200 for c in counts.values())
        assert chi2 <= CHI2_CRIT_31DOF


def test_lex_min_agrees_with_enumeration():
    rng = np.random.default_rng(50)
    for _ in range(20):
        cols_a = tuple(int(rng.integers(0, 4)) for _ in range(8))
        cols_b = tuple(int(rng.integers(0, 4)) for _ in range(8))
        kf = affine_key_function(8, 2, cols_a, cols_b, const=int(rng.integers(0, 4)))
        proto = ClassicalKeyProtocol(kf)
        _, _, key, state = intercepted_run(proto, rng)
        eve_offline(proto, state, rng, method="enumeration")
        by_enum = state.r_star_b
        eve_offline(proto, state, rng, method="affine")
        assert state.r_star_b == by_enum
        assert state.guess == key


def test_rejection_path_finds_members_when_dense():
    rng = np.random.default_rng(51)
    proto = ClassicalKeyProtocol(xor_trunc_key_function(6, 1), t_samples=1)
    _, _, key, state = intercepted_run(proto, rng)
    guess = eve_offline(proto, state, rng, method="rejection")
    assert state.method == "rejection" and not state.failed
    assert gamma_membership(proto.key_function, state, "a", state.r_star_a)
    assert gamma_membership(proto.key_function, state, "b", state.r_star_b)
    assert guess == key


def test_rejection_path_flags_exhaustion(monkeypatch):
    # identity-width xor keys make the candidate sets singletons in a 2^24
    # space; the capped sampler cannot find them
    monkeypatch.setattr(nogo, "REJECTION_CAP", 5000)
    rng = np.random.default_rng(52)
    proto = ClassicalKeyProtocol(xor_trunc_key_function(24, 24))
    _, _, _, state = intercepted_run(proto, rng)
    guess = eve_offline(proto, state, rng, method="rejection")
    assert guess is None
    assert state.failed
    rate = attack_success_rate(proto, 3, rng, method="rejection")
    assert rate.rate == 0.0 and rate.failures == 3


def test_key_function_validation():
    rng = np.random.default_rng(53)
    with pytest.raises(ValueError):
        table_key_function(13, 2, rng)
    with pytest.raises(ValueError):
        table_key_function(4, 9, rng)
    with pytest.raises(ValueError):
        affine_hash_key_function(20, 4, rng)  # no doubled-width field table
    with pytest.raises(ValueError):
        xor_trunc_key_function(8, 9)
    with pytest.raises(ValueError):
        xor_trunc_key_function(8, 0)
    with pytest.raises(ValueError):
        affine_key_function(4, 2, [0] * 3, [0] * 4)
    with pytest.raises(ValueError):
        ClassicalKeyProtocol(xor_trunc_key_function(4, 2), s_bits=5)


def test_batch_evaluations_match_scalar():
    rng = np.random.default_rng(54)
    kfs = [
        xor_trunc_key_function(8, 3),
        table_key_function(8, 2, rng),
        affine_hash_key_function(8, 4, rng),
    ]
    cands = rng.integers(0, 256, size=50).astype(np.int64)
    for kf in kfs:
        rb = int(rng.integers(0, 256))
        ra = int(rng.integers(0, 256))
        left = kf.batch_left(cands, rb)
        right = kf.batch_right(ra, cands)
        for i, c in enumerate(cands):
            assert left[i] == kf.value(int(c), rb)
            assert right[i] == kf.value(ra, int(c))


def test_affine_hash_matches_field_arithmetic():
    rng = np.random.default_rng(55)
    kf = affine_hash_key_function(8, 4, rng)
    for _ in range(100):
        ra = int(rng.integers(0, 256))
        rb = int(rng.integers(0, 256))
        direct = (gf_mul(16, kf.a_seed, (ra << 8) | rb) ^ kf.b_seed) >> 12
        assert kf.value(ra, rb) == direct


def test_guaranteed_floor_values():
    assert nogo_bound(12) == 0.0
    assert nogo_bound(16) > 0.0
    assert abs(nogo_bound(64) - (1 / 3 - 2 * (8 / 9) ** 64)) <= 1e-15
    assert abs(nogo_bound(64) - 0.3322685321) <= 1e-9
