"""Construction-time validation of the shared value objects."""

import numpy as np
import pytest

from ardprofiles.types import (ArdDataset, MixingMatrix, ModelParams,
                               PopulationMargins, ProfileMatrix,
                               ValidationError, check_alignment)


def small_margins(**kw):
    args = dict(
        total_population=1000.0,
        alter_group_sizes=np.array([400.0, 600.0]),
        subpop_sizes=np.array([30.0, 70.0]),
        cross_counts=np.array([[10.0, 30.0], [20.0, 40.0]]),
        alter_group_names=("young", "old"),
        subpop_names=("alice", "bob"),
    )
    args.update(kw)
    return PopulationMargins(**args)


#==============================================================================
# PopulationMargins
#==============================================================================


def test_margins_accepts_consistent_input():
    m = small_margins()
    assert m.n_alter_groups == 2
    assert m.n_subpops == 2
    assert m.has_cross_counts(0)


def test_margins_group_sizes_must_sum_to_total():
    with pytest.raises(ValidationError):
        small_margins(alter_group_sizes=np.array([400.0, 500.0]))


def test_margins_column_sums_must_match_subpop_sizes():
    with pytest.raises(ValidationError, match="alice"):
        small_margins(cross_counts=np.array([[15.0, 30.0], [20.0, 40.0]]))


def test_margins_cross_counts_bounded_by_group_size():
    with pytest.raises(ValidationError):
        small_margins(subpop_sizes=np.array([450.0, 70.0]),
                      cross_counts=np.array([[410.0, 30.0], [40.0, 40.0]]))


def test_margins_latent_column_is_all_nan():
    m = small_margins(cross_counts=np.array([[10.0, np.nan],
                                             [20.0, np.nan]]))
    assert m.has_cross_counts(0)
    assert not m.has_cross_counts(1)


def test_margins_partial_nan_rejected():
    with pytest.raises(ValidationError, match="partially"):
        small_margins(cross_counts=np.array([[10.0, np.nan],
                                             [20.0, 40.0]]))


def test_margins_rejects_nonpositive_counts():
    with pytest.raises(ValidationError):
        small_margins(total_population=0.0)
    with pytest.raises(ValidationError):
        small_margins(subpop_sizes=np.array([0.0, 100.0]), cross_counts=None)


def test_margins_default_names():
    m = small_margins(alter_group_names=(), subpop_names=())
    assert m.alter_group_names == ("a1", "a2")
    assert m.subpop_names == ("k1", "k2")


def test_margins_arrays_frozen():
    m = small_margins()
    with pytest.raises(ValueError):
        m.alter_group_sizes[0] = 5.0


#==============================================================================
# ProfileMatrix
#==============================================================================


def test_profile_from_margins_is_exact_ratio():
    m = small_margins()
    p = ProfileMatrix.from_margins(m)
    # h(a,k) = N_ak / N_a with no rounding slack at all.
    assert np.array_equal(p.values, m.cross_counts / m.alter_group_sizes[:, None])
    assert not p.latent_mask.any()


def test_profile_from_margins_masks_latent():
    m = small_margins(cross_counts=np.array([[10.0, np.nan],
                                             [20.0, np.nan]]))
    p = ProfileMatrix.from_margins(m)
    assert list(p.known_columns) == [0]
    assert list(p.latent_columns) == [1]
    assert np.all(np.isnan(p.values[:, 1]))


def test_profile_mask_must_be_columnwise():
    with pytest.raises(ValidationError, match="constant"):
        ProfileMatrix(np.array([[0.1, np.nan], [0.2, 0.3]]),
                      np.array([[False, True], [False, False]]))


def test_profile_known_entries_bounded():
    with pytest.raises(ValidationError):
        ProfileMatrix(np.array([[1.2], [0.3]]),
                      np.zeros((2, 1), dtype=bool))
    with pytest.raises(ValidationError):
        ProfileMatrix(np.array([[-0.1], [0.3]]),
                      np.zeros((2, 1), dtype=bool))


def test_profile_latent_entries_nonnegative_when_filled():
    mask = np.ones((2, 1), dtype=bool)
    ProfileMatrix(np.array([[0.5], [2.5]]), mask)    # > 1 fine for latent
    with pytest.raises(ValidationError):
        ProfileMatrix(np.array([[-0.5], [0.5]]), mask)


def test_profile_mask_columns_by_name():
    p = ProfileMatrix.from_margins(small_margins())
    masked = p.mask_columns(["bob"])
    assert list(masked.latent_columns) == [1]
    assert np.all(np.isnan(masked.values[:, 1]))
    with pytest.raises(ValidationError, match="carol"):
        p.mask_columns(["carol"])


def test_profile_with_values_keeps_mask_and_names():
    p = ProfileMatrix.from_margins(small_margins()).mask_columns([0])
    vals = np.array(p.values)
    vals[:, 0] = 0.5
    filled = p.with_values(vals)
    assert filled.subpop_names == p.subpop_names
    assert np.array_equal(filled.latent_mask, p.latent_mask)
    assert np.all(filled.values[:, 0] == 0.5)


#==============================================================================
# ArdDataset
#==============================================================================


def test_dataset_accepts_integral_floats():
    d = ArdDataset(np.array([[1.0, 2.0]]), np.array([0]),
                   ("alice", "bob"), ("g1",))
    assert d.counts.dtype == np.int64


def test_dataset_rejects_fractional_counts():
    with pytest.raises(ValidationError):
        ArdDataset(np.array([[1.5, 2.0]]), np.array([0]),
                   ("alice", "bob"), ("g1",))


def test_dataset_rejects_negative_and_nan():
    with pytest.raises(ValidationError):
        ArdDataset(np.array([[-1, 2]]), np.array([0]), ("a", "b"), ("g1",))
    with pytest.raises(ValidationError):
        ArdDataset(np.array([[np.nan, 2.0]]), np.array([0]),
                   ("a", "b"), ("g1",))


def test_dataset_rejects_bad_ego_labels():
    with pytest.raises(ValidationError):
        ArdDataset(np.array([[1, 2]]), np.array([3]), ("a", "b"), ("g1",))


def test_dataset_rejects_duplicate_ids():
    with pytest.raises(ValidationError, match="unique"):
        ArdDataset(np.array([[1], [2]]), np.array([0, 0]), ("a",), ("g1",),
                   respondent_ids=("r1", "r1"))


def test_dataset_default_ids():
    d = ArdDataset(np.array([[1], [2]]), np.array([0, 0]), ("a",), ("g1",))
    assert d.respondent_ids == ("r1", "r2")


#==============================================================================
# MixingMatrix
#==============================================================================


def test_mixing_accepts_simplex_rows():
    m = MixingMatrix(np.array([[0.25, 0.75], [0.5, 0.5]]))
    assert m.n_ego_groups == 2
    assert m.n_alter_groups == 2


def test_mixing_rejects_row_sum_off_by_more_than_tolerance():
    with pytest.raises(ValidationError, match="sums to"):
        MixingMatrix(np.array([[0.25, 0.75 + 1e-10]]))
    MixingMatrix(np.array([[0.25, 0.75 + 1e-13]]))    # inside tolerance


def test_mixing_rejects_negative_entries():
    with pytest.raises(ValidationError):
        MixingMatrix(np.array([[-0.1, 1.1]]))


def test_mixing_from_unnormalized():
    rng = np.random.default_rng(17)
    raw = rng.uniform(0.1, 5.0, size=(6, 8))
    m = MixingMatrix.from_unnormalized(raw)
    assert np.all(np.abs(m.m.sum(axis=1) - 1.0) <= 1e-12)
    with pytest.raises(ValidationError):
        MixingMatrix.from_unnormalized(np.array([[0.0, 0.0]]))


#==============================================================================
# ModelParams and alignment
#==============================================================================


def test_params_domain_checks():
    mix = MixingMatrix(np.array([[0.5, 0.5]]))
    ok = ModelParams(log_degrees=np.array([4.0]), mixing=mix,
                     overdispersions=np.array([2.0]),
                     latent_profile=np.array([[0.1], [0.2]]))
    assert ok.degrees[0] == pytest.approx(np.exp(4.0))
    assert ok.mu_m.shape == (1,)
    with pytest.raises(ValidationError):
        ModelParams(log_degrees=np.array([4.0]), mixing=mix,
                    overdispersions=np.array([1.0]),
                    latent_profile=np.array([[0.1], [0.2]]))
    with pytest.raises(ValidationError):
        ModelParams(log_degrees=np.array([4.0]), mixing=mix,
                    overdispersions=np.array([2.0]),
                    latent_profile=np.array([[0.1], [0.2]]), sigma_d=0.0)


def test_alignment_checks_names():
    d = ArdDataset(np.array([[1, 2]]), np.array([0]), ("alice", "bob"), ("g1",))
    p = ProfileMatrix(np.array([[0.1, 0.2]]), np.zeros((1, 2), dtype=bool),
                      subpop_names=("alice", "bob"))
    check_alignment(d, p)
    p2 = ProfileMatrix(np.array([[0.1, 0.2]]), np.zeros((1, 2), dtype=bool),
                       subpop_names=("bob", "alice"))
    with pytest.raises(ValidationError, match="columns differ"):
        check_alignment(d, p2)
