"""Tests for data ingestion, masking, and synthetic generators."""

import datetime
import math
import os

import numpy as np
import pytest

from copulacast.dataset import (
    CONTINUOUS,
    ORDINAL,
    MarginalSpec,
    MaskRecord,
    ObservationMatrix,
    Schema,
    apply_mask,
    gen_copula_sample,
    gen_seasonal_load,
    load_csv,
    mask_record_from_file,
    mask_record_to_file,
    monthly_index,
    save_csv,
    schema_of,
)
from copulacast.errors import DataError


def small_matrix():
    values = np.array([[1.0, 2.0], [3.0, np.nan], [5.0, 6.0]])
    mask = ~np.isnan(values)
    return ObservationMatrix(values=values, mask=mask,
                             column_kinds=(CONTINUOUS, CONTINUOUS),
                             column_names=("a", "b"),
                             time_index=monthly_index(datetime.date(2013, 1, 1), 3))


def test_monthly_index_wraps_years():
    idx = monthly_index(datetime.date(2013, 11, 1), 4)
    assert idx == (datetime.date(2013, 11, 1), datetime.date(2013, 12, 1),
                   datetime.date(2014, 1, 1), datetime.date(2014, 2, 1))


def test_observation_matrix_normalizes_hidden_values():
    values = np.array([[1.0, 99.0], [3.0, 4.0]])
    mask = np.array([[True, False], [True, True]])
    m = ObservationMatrix(values=values, mask=mask,
                          column_kinds=(CONTINUOUS, CONTINUOUS),
                          column_names=("a", "b"),
                          time_index=monthly_index(datetime.date(2013, 1, 1), 2))
    assert np.isnan(m.values[0, 1])
    assert m.values[1, 1] == 4.0


def test_observation_matrix_rejects_shape_mismatch():
    with pytest.raises(DataError):
        ObservationMatrix(values=np.ones((2, 2)), mask=np.ones((2, 3), dtype=bool),
                          column_kinds=(CONTINUOUS, CONTINUOUS),
                          column_names=("a", "b"),
                          time_index=monthly_index(datetime.date(2013, 1, 1), 2))


def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    values = rng.normal(size=(20, 3)) * math.pi
    mask = rng.random(size=(20, 3)) > 0.2
    values[~mask] = np.nan
    m = ObservationMatrix(values=values, mask=mask,
                          column_kinds=(CONTINUOUS,) * 3,
                          column_names=("x", "y", "z"),
                          time_index=monthly_index(datetime.date(2013, 1, 1), 20))
    path = os.path.join(tmp_path, "round.csv")
    save_csv(m, path)
    back = load_csv(path, schema_of(m))
    assert back.values[back.mask].tolist() == m.values[m.mask].tolist()
    assert np.array_equal(back.mask, m.mask)
    assert back.column_names == m.column_names
    assert back.time_index == m.time_index


def test_csv_round_trip_keeps_ordinal_levels(tmp_path):
    values = np.array([[1.0, 2.0], [2.0, np.nan], [3.0, 2.0], [1.0, 5.0]])
    mask = ~np.isnan(values)
    m = ObservationMatrix(values=values, mask=mask,
                          column_kinds=(ORDINAL, CONTINUOUS),
                          column_names=("grade", "load"),
                          time_index=monthly_index(datetime.date(2013, 1, 1), 4),
                          ordinal_levels={0: (1.0, 2.0, 3.0)})
    path = os.path.join(tmp_path, "ordinal.csv")
    save_csv(m, path)
    back = load_csv(path, schema_of(m))
    assert back.column_kinds == (ORDINAL, CONTINUOUS)
    assert back.ordinal_levels[0] == (1.0, 2.0, 3.0)
    assert np.array_equal(back.mask, m.mask)


def test_load_csv_rejects_unknown_column(tmp_path):
    path = os.path.join(tmp_path, "bad.csv")
    with open(path, "w") as fh:
        fh.write("time,a\n2013-01,1.0\n")
    schema = Schema(columns={"b": CONTINUOUS})
    with pytest.raises(DataError):
        load_csv(path, schema)


def test_apply_mask_count_rounds_half_up():
    m = gen_seasonal_load(n_periods=108, n_features=12, seed=3)
    masked, record = apply_mask(m, 0.10, seed=5)
    # 108 * 13 cells = 1404; 10% = 140.4 -> 140 cells erased.
    assert len(record.erased_cells) == 140
    assert int((~masked.mask).sum()) == 140
    # Half-up boundary: 11% of a 50-cell matrix is 5.5, which rounds to 6.
    small = gen_seasonal_load(n_periods=25, n_features=1, seed=3)
    _, rec2 = apply_mask(small, 0.11, seed=5)
    assert len(rec2.erased_cells) == 6


def test_apply_mask_is_deterministic_and_sorted():
    m = gen_seasonal_load(n_periods=24, n_features=3, seed=1)
    _, rec_a = apply_mask(m, 0.2, seed=42)
    _, rec_b = apply_mask(m, 0.2, seed=42)
    assert rec_a.erased_cells == rec_b.erased_cells
    assert list(rec_a.erased_cells) == sorted(rec_a.erased_cells)
    _, rec_c = apply_mask(m, 0.2, seed=43)
    assert rec_a.erased_cells != rec_c.erased_cells


def test_apply_mask_leaves_original_untouched():
    m = gen_seasonal_load(n_periods=24, n_features=2, seed=1)
    before = m.values.copy()
    masked, _ = apply_mask(m, 0.3, seed=0)
    assert np.array_equal(m.values, before)
    assert masked is not m


def test_mask_record_file_round_trip(tmp_path):
    rec = MaskRecord(erased_cells=((0, 1), (3, 2)), fraction=0.1, seed=9)
    path = os.path.join(tmp_path, "mask.json")
    mask_record_to_file(rec, path)
    back = mask_record_from_file(path)
    assert back == rec


def test_gen_seasonal_load_shape_and_names():
    m = gen_seasonal_load()
    assert m.values.shape == (108, 13)
    assert m.column_names[0] == "load"
    assert m.column_names[1] == "feat_01"
    assert m.column_names[-1] == "feat_12"
    assert m.time_index[0] == datetime.date(2013, 1, 1)
    assert bool(m.mask.all())


def test_gen_seasonal_load_target_has_period_12_season():
    m = gen_seasonal_load(n_periods=96, noise_sd=0.0, trend=0.0, seed=0)
    load = m.values[:, 0]
    # Without noise or trend the load repeats exactly every 12 periods.
    assert np.allclose(load[12:], load[:-12])


def test_gen_seasonal_load_features_lag_the_target():
    # With zero noise and zero trend the target is exactly 12-periodic, so a
    # wrap-around roll over a multiple of 12 rows equals the true lag.
    m = gen_seasonal_load(n_periods=60, noise_sd=0.0, trend=0.0, seed=0)
    load = m.values[:, 0]
    for j in (1, 2, 3):
        lag = j % 3
        scale = 0.5 + 0.25 * ((j - 1) % 4)
        offset = 5.0 * j
        expected = offset + scale * np.roll(load, lag)
        assert np.allclose(m.values[:, j], expected, atol=1e-9)


def test_gen_seasonal_load_seed_controls_noise():
    a = gen_seasonal_load(n_periods=24, seed=0)
    b = gen_seasonal_load(n_periods=24, seed=0)
    c = gen_seasonal_load(n_periods=24, seed=1)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_marginal_spec_validation():
    with pytest.raises(ValueError):
        MarginalSpec(kind="normal")
    with pytest.raises(ValueError):
        MarginalSpec(kind="ordinal", levels=(1.0,), probs=(1.0,))
    with pytest.raises(ValueError):
        MarginalSpec(kind="ordinal", levels=(1.0, 2.0), probs=(0.7, 0.7))
    with pytest.raises(ValueError):
        MarginalSpec(kind="cauchy", params=(0.0, 1.0))


def test_gen_copula_sample_marginals_and_dependence():
    sigma = np.array([[1.0, 0.8], [0.8, 1.0]])
    specs = [MarginalSpec(kind="normal", params=(2.0, 3.0)),
             MarginalSpec(kind="uniform", params=(0.0, 1.0))]
    m = gen_copula_sample(sigma, specs, 4000, seed=11)
    assert m.values.shape == (4000, 2)
    assert abs(float(np.mean(m.values[:, 0])) - 2.0) < 0.2
    assert abs(float(np.std(m.values[:, 0])) - 3.0) < 0.2
    assert 0.0 <= m.values[:, 1].min() and m.values[:, 1].max() <= 1.0
    # Spearman rho of a Gaussian copula is (6/pi) asin(rho/2).
    r0 = np.argsort(np.argsort(m.values[:, 0]))
    r1 = np.argsort(np.argsort(m.values[:, 1]))
    spearman = float(np.corrcoef(r0, r1)[0, 1])
    expected = 6.0 / math.pi * math.asin(0.4)
    assert abs(spearman - expected) < 0.05


def test_gen_copula_sample_ordinal_levels():
    sigma = np.eye(2)
    specs = [MarginalSpec(kind="normal", params=(0.0, 1.0)),
             MarginalSpec(kind="ordinal", levels=(1.0, 2.0, 3.0),
                          probs=(0.2, 0.5, 0.3))]
    m = gen_copula_sample(sigma, specs, 3000, seed=4)
    assert m.column_kinds[1] == ORDINAL
    levels, counts = np.unique(m.values[:, 1], return_counts=True)
    assert levels.tolist() == [1.0, 2.0, 3.0]
    assert abs(counts[1] / 3000 - 0.5) < 0.05
