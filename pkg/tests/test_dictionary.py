import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sparsedet.dictionary import (
    ChirpSpec,
    Dictionary,
    DictionaryFormatError,
    build_chirp_dictionary,
    column_subset,
    gram,
    linf_matrix_norm,
    load_dictionary,
    save_dictionary,
)
from sparsedet.detect import incoherence_gamma


def test_paper_dictionary_shape_and_grid(paper_dict):
    assert paper_dict.shape == (108, 250)
    assert paper_dict.delay_step == pytest.approx(1 / 3, abs=1e-15)
    assert paper_dict.is_complex
    assert paper_dict.origin == "synthesized-chirp"
    np.testing.assert_allclose(paper_dict.column_norms, 1.0, atol=1e-12)


def test_columns_follow_analytic_chirp(paper_dict):
    spec = ChirpSpec()
    t = np.arange(108)
    for i in (0, 1, 99, 249):
        col = spec.waveform(t - i / 3)
        np.testing.assert_allclose(paper_dict.entries[:, i], col / np.linalg.norm(col), atol=1e-15)


def test_integer_shift_case_gives_shifted_copies():
    A = build_chirp_dictionary(ChirpSpec(2, 1, False), 4, 3)
    assert A.delay_step == 1.0
    a = A.entries
    np.testing.assert_array_equal(a[1:, 1], a[:-1, 0])
    np.testing.assert_array_equal(a[1:, 2], a[:-1, 1])
    assert a[0, 1] == 0 and a[0, 2] == 0 and a[1, 2] == 0


def test_real_mode_takes_real_part_before_normalising():
    A = build_chirp_dictionary(ChirpSpec(25, 1, False), 108, 250)
    assert not A.is_complex
    col = np.cos(np.pi * np.arange(25) ** 2 / 25)
    np.testing.assert_allclose(A.entries[:25, 0], col / np.linalg.norm(col), atol=1e-15)


@pytest.mark.parametrize("M,N", [(25, 10), (10, 5), (20, 0)])
def test_build_rejects_bad_sizes(M, N):
    with pytest.raises(ValueError):
        build_chirp_dictionary(ChirpSpec(25, 1), M, N)


def test_chirp_spec_validation():
    with pytest.raises(ValueError):
        ChirpSpec(0, 1)
    with pytest.raises(ValueError):
        ChirpSpec(5, -1)


def test_build_is_deterministic():
    a = build_chirp_dictionary(ChirpSpec(), 108, 250).entries
    b = build_chirp_dictionary(ChirpSpec(), 108, 250).entries
    assert a.tobytes() == b.tobytes()


def test_entries_are_read_only(paper_dict):
    with pytest.raises(ValueError):
        paper_dict.entries[0, 0] = 1


def test_single_target_gamma_matches_published_value(paper_dict):
    # Diagnostic gate: within 0.05; in fact reproduced to the printed digits.
    g = incoherence_gamma(paper_dict, [100])
    assert abs(g - 0.8272) < 0.05
    assert round(g, 4) == 0.8272


@pytest.mark.parametrize(
    "A,expected",
    [(np.eye(2), 1.0), ([[1, -2], [3, 4]], 7.0), ([[3 + 4j]], 5.0)],
)
def test_linf_norm_examples(A, expected):
    assert linf_matrix_norm(A) == expected


def test_linf_norm_rejects_empty():
    with pytest.raises(ValueError):
        linf_matrix_norm(np.zeros((0, 3)))


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (4, 5), elements=finite), st.permutations(range(5)), st.floats(-50, 50))
def test_linf_norm_column_permutation_and_homogeneity(A, perm, c):
    base = linf_matrix_norm(A)
    assert linf_matrix_norm(A[:, list(perm)]) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert linf_matrix_norm(c * A) == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-9)


def test_column_subset():
    I = np.eye(3)
    np.testing.assert_array_equal(column_subset(I, [0, 2]), I[:, [0, 2]])
    np.testing.assert_array_equal(column_subset(I, [2, 0]), I[:, [2, 0]])
    assert column_subset(I, []).shape == (3, 0)
    with pytest.raises(IndexError):
        column_subset(I, [3])
    with pytest.raises(ValueError):
        column_subset(I, [1, 1])


def test_column_subset_paper_support(paper_dict):
    sub = column_subset(paper_dict, [99, 103, 132])
    assert sub.shape == (108, 3)
    np.testing.assert_array_equal(sub[:, 1], paper_dict.entries[:, 103])


def test_gram_examples(rng):
    np.testing.assert_array_equal(gram(np.eye(2), np.eye(2)), np.eye(2))
    u = rng.standard_normal((6, 1)) + 1j * rng.standard_normal((6, 1))
    u /= np.linalg.norm(u)
    assert gram(u, u)[0, 0] == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        gram(np.eye(2), np.eye(3))


def test_gram_matches_direct_summation(rng):
    A = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    B = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    oracle = np.zeros((3, 2), dtype=complex)
    for i in range(3):
        for j in range(2):
            for p in range(5):
                oracle[i, j] += np.conj(A[p, i]) * B[p, j]
    np.testing.assert_allclose(gram(A, B), oracle, atol=1e-12)
    np.testing.assert_allclose(gram(A, B).conj().T, gram(B, A), atol=1e-12)


def test_roundtrip_paper_dictionary(tmp_path, paper_dict):
    p = tmp_path / "paper.dict"
    save_dictionary(paper_dict, p)
    lines = p.read_text().split("\n")
    assert lines[0] == "sparsedet-dict v1"
    assert lines[1].startswith("M=108 N=250 field=complex delay_step=")
    B = load_dictionary(p)
    assert B.origin == "loaded-from-file"
    assert B.entries.tobytes() == paper_dict.entries.tobytes()
    assert B.delay_step == paper_dict.delay_step
    assert B.chirp == paper_dict.chirp


def test_roundtrip_real_user_matrix(tmp_path, rng):
    A = Dictionary.from_matrix(rng.standard_normal((4, 6)))
    p = tmp_path / "r.dict"
    save_dictionary(A, p)
    B = load_dictionary(p)
    assert not B.is_complex
    assert B.entries.tobytes() == A.entries.tobytes()


def _write(tmp_path, text):
    p = tmp_path / "bad.dict"
    p.write_text(text)
    return p


def test_load_dimension_mismatch(tmp_path):
    hdr = "sparsedet-dict v1\nM=4 N=2 field=real delay_step=1 L=2 B=1\n"
    p = _write(tmp_path, hdr + "1,0\n0,1\n1,1\n")
    with pytest.raises(DictionaryFormatError, match="dimension mismatch"):
        load_dictionary(p)
    p = _write(tmp_path, hdr + "1,0\n0,1\n1,1\n1\n")
    with pytest.raises(DictionaryFormatError, match="dimension mismatch"):
        load_dictionary(p)


def test_load_non_finite(tmp_path):
    p = _write(tmp_path, "sparsedet-dict v1\nM=1 N=2 field=real delay_step=1 L=2 B=1\n1,nan\n")
    with pytest.raises(DictionaryFormatError, match="non-finite"):
        load_dictionary(p)


@pytest.mark.parametrize(
    "text",
    [
        "not-a-dict\nM=1 N=1 field=real delay_step=1 L=2 B=1\n1\n",
        "sparsedet-dict v1\nM=1 N=1 field=quaternion delay_step=1 L=2 B=1\n1\n",
        "sparsedet-dict v1\nM=1 N=1 delay_step=1 L=2 B=1\n1\n",
        "sparsedet-dict v1\nM=x N=1 field=real delay_step=1 L=2 B=1\n1\n",
        "sparsedet-dict v1\nM=1 N=1 field=real delay_step=1 L=2 B=1\nabc\n",
    ],
)
def test_load_malformed(tmp_path, text):
    with pytest.raises(DictionaryFormatError):
        load_dictionary(_write(tmp_path, text))
