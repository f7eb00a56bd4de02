import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqdec.conv_code import (MAX_MEMORY, TABLE_CODES, CodeError, build_trellis, encode,
                              parse_octal_generators, table_codes, trellis_walk)


@pytest.mark.parametrize("text,nu,tb", [("133,171", 6, 35), ("1,3", 1, 10), ("5,7", 2, 15),
                                        ("23,35", 4, 25), ("561,753", 8, 45),
                                        ("2335,3661", 10, 55)])
def test_table_memory_and_traceback(text, nu, tb):
    code = parse_octal_generators(text)
    assert code.memory == nu
    assert code.traceback_hint == tb
    assert code.rate == (1, 2)
    assert code.constraint_length == nu + 1


def test_table_listing_has_six_codes():
    codes = table_codes()
    assert [c.memory for c in codes] == [1, 2, 4, 6, 8, 10]
    assert len(TABLE_CODES) == 6


def test_name_and_prefix():
    code = parse_octal_generators("0o5, 0o7")
    assert code.generators == (5, 7)
    assert code.name == "(o5,o7)_2"
    assert str(code) == "5,7"


@pytest.mark.parametrize("bad", ["", "5", "5,8", "5,x", "0,7", "5,7,", "15,7", "5;7"])
def test_malformed_generators_rejected(bad):
    with pytest.raises(CodeError):
        parse_octal_generators(bad)


def test_memory_guard():
    code = parse_octal_generators("2335,3661")
    with pytest.raises(CodeError):
        build_trellis(code, max_memory=8)
    assert MAX_MEMORY >= 10


def test_trellis_step_5_7():
    t = build_trellis(parse_octal_generators("5,7"))
    # from state 0, input 1: both taps see the new bit
    assert t.next_state[0, 1] == 1
    assert tuple(t.outputs[0, 1]) == (1, 1)
    assert tuple(t.outputs[0, 0]) == (0, 0)
    assert t.num_states == 4


def test_trellis_is_consistent_with_predecessors():
    t = build_trellis(parse_octal_generators("23,35"))
    for s in range(t.num_states):
        for j in range(2):
            p, b = t.prev_state[s, j], t.prev_input[s, j]
            assert t.next_state[p, b] == s
            assert tuple(t.outputs[p, b]) == tuple(t.prev_outputs[s, j])


def test_encode_hand_traces():
    np.testing.assert_array_equal(encode([1, 0, 0], parse_octal_generators("5,7")),
                                  [1, 1, 0, 1, 1, 1])
    np.testing.assert_array_equal(encode([1], parse_octal_generators("1,3")), [1, 1])
    with pytest.raises(CodeError):
        encode([], parse_octal_generators("5,7"))


@pytest.mark.parametrize("code", table_codes(), ids=str)
def test_zero_input_gives_zero_codeword(code):
    assert not encode(np.zeros(40, np.uint8), code).any()


@pytest.mark.parametrize("code", table_codes(), ids=str)
def test_shift_property(code, rng):
    u = rng.integers(0, 2, 60)
    delayed = encode(np.concatenate([[0], u]), code)
    np.testing.assert_array_equal(delayed[:2], [0, 0])
    np.testing.assert_array_equal(delayed[2:], encode(u, code))


def test_encode_is_linear(rng):
    code = parse_octal_generators("133,171")
    a, b = rng.integers(0, 2, (2, 200))
    np.testing.assert_array_equal(encode(a ^ b, code), encode(a, code) ^ encode(b, code))


def test_encode_batched_matches_rows(rng):
    code = parse_octal_generators("23,35")
    u = rng.integers(0, 2, (4, 50))
    rows = np.stack([encode(r, code) for r in u])
    np.testing.assert_array_equal(encode(u, code), rows)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(list(TABLE_CODES.values())),
       st.lists(st.integers(0, 1), min_size=1, max_size=60),
       st.integers(0, 2**10 - 1))
def test_trellis_walk_matches_encode(gens, bits, state):
    code = parse_octal_generators(gens)
    state &= code.num_states - 1
    x, final = trellis_walk(bits, build_trellis(code), state)
    np.testing.assert_array_equal(x, encode(bits, code, state))
    # the final state holds the last ν inputs, most recent in bit 0
    hist = [(state >> i) & 1 for i in range(code.memory)][::-1] + list(bits)
    expect = sum(b << i for i, b in enumerate(reversed(hist[-code.memory:])))
    assert final == expect
