import itertools
import random

import numpy as np
import pytest

from srm_reciprocity.dyad_data import (CovariateTransform, IngestConfig, NetworkDataset, load_csv,
                                       load_ingest_config, summarize, write_csv)
from srm_reciprocity.errors import DataValidationError, UnobservedDyadError

HEADER = "ego,alter,successes,trials,covariate\n"


def round_robin_rows(n_nodes, trials=10, covariate=None):
    rows = []
    for i, j in itertools.permutations(range(1, n_nodes + 1), 2):
        x = covariate if covariate is not None else float(min(i, j) + max(i, j)) / 10.0
        rows.append(f"{i},{j},{(i * j) % (trials + 1)},{trials},{x!r}")
    return rows


def test_round_robin_three_nodes(write_csv_text):
    path = write_csv_text(HEADER + "\n".join(round_robin_rows(3)) + "\n")
    dataset = load_csv(path)
    assert dataset.n_nodes == 3
    assert dataset.n_observations == 6
    assert dataset.n_dyads == 3
    assert [node.index for node in dataset.nodes] == [0, 1, 2]


def test_successes_exceed_trials_reports_line(write_csv_text):
    path = write_csv_text(HEADER + "1,2,3,10,0.0\n2,1,11,10,0.0\n")
    with pytest.raises(DataValidationError, match="successes exceed trials at line 3") as excinfo:
        load_csv(path)
    assert excinfo.value.line == 3


def test_block_design_is_accepted(write_csv_text):
    """Node 3 never appears as alter; only observed dyads are indexed."""
    rows = [row for row in round_robin_rows(4) if row.split(',')[1] != '3']
    dataset = load_csv(write_csv_text(HEADER + "\n".join(rows) + "\n"))
    assert dataset.n_nodes == 4
    assert dataset.n_observations == 9
    assert dataset.n_dyads == 6
    assert dataset.both_directions_mask().sum() == 3


@pytest.mark.parametrize("row, message", [
    ("1,1,2,10,0.0", "self-loop"),
    ("1,2,-1,10,0.0", "negative successes"),
    ("1,2,0,0,0.0", "trials must be at least 1"),
    ("1,2,1,10,nan", "covariate is not finite"),
    ("1,2,one,10,0.0", "malformed row"),
    ("1,2,1.5,10,0.0", "not an integer"),
    ("1,2,1,10", "wrong number of fields"),
])
def test_invalid_rows_are_rejected_with_line(write_csv_text, row, message):
    path = write_csv_text(HEADER + "2,3,1,4,0.0\n" + row + "\n")
    with pytest.raises(DataValidationError, match=message) as excinfo:
        load_csv(path)
    assert excinfo.value.line == 3


def test_duplicate_pair_reports_both_lines(write_csv_text):
    path = write_csv_text(HEADER + "1,2,1,4,0.0\n2,1,1,4,0.0\n1,2,2,4,0.0\n")
    with pytest.raises(DataValidationError, match=r"first seen at line 2.*at line 4"):
        load_csv(path)


def test_asymmetric_covariate_is_rejected(write_csv_text):
    path = write_csv_text(HEADER + "1,2,1,4,0.5\n2,1,1,4,0.6\n")
    with pytest.raises(DataValidationError, match="asymmetric covariate"):
        load_csv(path)


def test_covariate_within_tolerance_is_accepted(write_csv_text):
    path = write_csv_text(HEADER + "1,2,1,4,0.5\n2,1,1,4,0.5000000000001\n")
    dataset = load_csv(path)
    assert dataset.covariate_symmetric


def test_missing_header_column(write_csv_text):
    path = write_csv_text("ego,alter,successes,trials\n1,2,1,4\n")
    with pytest.raises(DataValidationError, match="at line 1"):
        load_csv(path)


def test_empty_file(write_csv_text):
    with pytest.raises(DataValidationError, match="no observations"):
        load_csv(write_csv_text(HEADER))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "absent.csv")


def test_dyad_of_is_symmetric(triad):
    assert triad.dyad_of("1", "2") == triad.dyad_of("2", "1")
    assert triad.dyad_of(0, 2).id == triad.dyad_of(2, 0).id
    assert triad.dyad_of(triad.nodes[1], triad.nodes[2]) == triad.dyad_of("3", "2")


def test_dyad_of_rejects_self_pair(triad):
    with pytest.raises(ValueError, match="self-pair"):
        triad.dyad_of(1, 1)


def test_dyad_of_unobserved(write_csv_text):
    dataset = load_csv(write_csv_text(HEADER + "1,2,1,4,0.0\n3,4,1,4,0.0\n"))
    with pytest.raises(UnobservedDyadError):
        dataset.dyad_of("1", "3")


@pytest.mark.parametrize("n_nodes", [3, 5, 7])
def test_complete_network_dyad_ids_cover_all_pairs(write_csv_text, n_nodes):
    dataset = load_csv(write_csv_text(HEADER + "\n".join(round_robin_rows(n_nodes)) + "\n"))
    ids = {dataset.dyad_of(i, j).id for i, j in itertools.permutations(range(n_nodes), 2)}
    assert ids == set(range(n_nodes * (n_nodes - 1) // 2))
    for i, j in itertools.permutations(range(n_nodes), 2):
        assert dataset.dyad_of(i, j).id == dataset.dyad_of(j, i).id


def test_row_permutation_gives_identical_dataset(write_csv_text):
    rows = round_robin_rows(5)
    shuffled = list(rows)
    random.Random(3).shuffle(shuffled)
    first = load_csv(write_csv_text(HEADER + "\n".join(rows) + "\n", "a.csv"))
    second = load_csv(write_csv_text(HEADER + "\n".join(shuffled) + "\n", "b.csv"))
    assert first == second
    assert first.fingerprint() == second.fingerprint()
    np.testing.assert_array_equal(first.dyad_index, second.dyad_index)


def test_numeric_labels_sort_numerically(write_csv_text):
    dataset = load_csv(write_csv_text(HEADER + "10,2,1,4,0.0\n2,10,1,4,0.0\n"))
    assert [node.label for node in dataset.nodes] == ["2", "10"]


def test_write_csv_round_trip(write_csv_text, tmp_path):
    original = load_csv(write_csv_text(HEADER + "\n".join(round_robin_rows(4)) + "\n"))
    copy = load_csv(write_csv(original, tmp_path / "copy.csv"))
    assert copy == original


def test_summary_complete_round_robin(write_csv_text):
    summary = summarize(load_csv(write_csv_text(HEADER + "\n".join(round_robin_rows(10)) + "\n")))
    assert (summary.n_nodes, summary.n_observations, summary.n_dyads) == (10, 90, 45)
    assert summary.both_directions_fraction == 1.0
    assert summary.total_trials == 900


def test_summary_single_direction_and_constant_covariate(write_csv_text):
    rows = [f"{i},{j},1,4,2.5" for i, j in itertools.combinations(range(1, 6), 2)]
    summary = summarize(load_csv(write_csv_text(HEADER + "\n".join(rows) + "\n")))
    assert summary.both_directions_fraction == 0.0
    assert (summary.covariate_min, summary.covariate_max, summary.covariate_mean) == (2.5, 2.5, 2.5)
    assert summary.pooled_rate == pytest.approx(0.25)


def test_standardize_transform_is_recorded(write_csv_text):
    path = write_csv_text(HEADER + "\n".join(round_robin_rows(4)) + "\n")
    dataset = load_csv(path, IngestConfig(covariate_transform='standardize'))
    assert dataset.covariate_transform.kind == 'standardize'
    assert np.mean(dataset.covariate) == pytest.approx(0.0, abs=1e-12)
    assert np.std(dataset.covariate) == pytest.approx(1.0)
    np.testing.assert_allclose(dataset.covariate_transform.invert(dataset.covariate), dataset.raw_covariate)


def test_covariate_transform_dict_round_trip():
    transform = CovariateTransform(kind='center', center=1.5, scale=1.0)
    assert CovariateTransform.from_dict(transform.to_dict()) == transform
    assert CovariateTransform.from_dict(None) == CovariateTransform()


def test_ingest_config_remaps_columns(write_csv_text, tmp_path):
    config_path = tmp_path / "ingest.conf"
    config_path.write_text("# column remap\nego = from\nalter = to\ncovariate_transform = center\n")
    config = load_ingest_config(config_path)
    assert config.ego_column == 'from'
    path = write_csv_text("from,to,successes,trials,covariate\n1,2,1,4,1.0\n2,1,2,4,1.0\n")
    dataset = load_csv(path, config)
    assert dataset.n_observations == 2
    np.testing.assert_allclose(dataset.covariate, [0.0, 0.0])


def test_ingest_config_unknown_key(tmp_path):
    config_path = tmp_path / "ingest.conf"
    config_path.write_text("sender = a\n")
    with pytest.raises(ValueError, match="Unknown ingest config keys"):
        load_ingest_config(config_path)


def test_dataset_arrays_are_read_only(triad):
    with pytest.raises(ValueError):
        triad.successes[0] = 1.0


def test_roster_keeps_isolates():
    dataset = NetworkDataset.from_records([("a", "b", 1, 2, 0.0, None)], roster=["a", "b", "c"])
    assert dataset.n_nodes == 3
    assert dataset.n_dyads == 1
