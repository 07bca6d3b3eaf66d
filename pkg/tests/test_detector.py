import numpy as np
import pytest

from conftest import make_store
from reanno import build_index, fit_density
from reanno.datastore import RevisionFile, SynthConfig, synth_generate
from reanno.detector import (
    CONSISTENT,
    INCONSISTENT,
    CredibilityReport,
    DetectorError,
    classify_threshold,
    credibility_scores,
    rank_eval,
    read_report,
    vote_detect,
    write_report,
)


def vote_fixture():
    # query id000 at origin with observed label A(=0); three closest
    # neighbours carry chosen labels, the rest sit far away
    def build_store(neighbor_labels, observed=0):
        vectors = [[0.0, 0.0]]
        labels = [observed]
        for i, lab in enumerate(neighbor_labels):
            vectors.append([0.1 * (i + 1), 0.0])
            labels.append(lab)
        vectors.append([50.0, 50.0])
        labels.append(2)
        return make_store(vectors, labels, label_names=("A", "B", "C"))

    return build_store


def test_vote_majority_consistent():
    store = vote_fixture()([0, 1, 0])
    verdicts = vote_detect(build_index(store), store, ["id000"], k=3)
    assert verdicts["id000"] == CONSISTENT


def test_vote_majority_inconsistent():
    store = vote_fixture()([1, 1, 2])
    verdicts = vote_detect(build_index(store), store, ["id000"], k=3)
    assert verdicts["id000"] == INCONSISTENT


def test_vote_three_way_tie_goes_to_nearest():
    # labels [A, B, C] all tied at count 1 -> nearest representative wins (A)
    store = vote_fixture()([0, 1, 2])
    verdicts = vote_detect(build_index(store), store, ["id000"], k=3)
    assert verdicts["id000"] == CONSISTENT
    store2 = vote_fixture()([1, 0, 2])
    verdicts2 = vote_detect(build_index(store2), store2, ["id000"], k=3)
    assert verdicts2["id000"] == INCONSISTENT


def test_vote_k1_equals_nearest_label_match(two_cluster_store):
    idx = build_index(two_cluster_store)
    verdicts = vote_detect(idx, two_cluster_store, two_cluster_store.ids, k=1)
    for id in two_cluster_store.ids:
        nl = idx.query_ids(two_cluster_store, [id], 1, exclude_self=True)[0]
        nearest_label = two_cluster_store.by_id(nl.ids[0]).observed_label
        expected = CONSISTENT if nearest_label == two_cluster_store.by_id(id).observed_label \
            else INCONSISTENT
        assert verdicts[id] == expected


def test_vote_k_exceeding_neighbours_rejected(two_cluster_store):
    with pytest.raises(Exception):
        vote_detect(build_index(two_cluster_store), two_cluster_store,
                    ["id000"], k=len(two_cluster_store))


def test_psi_hand_minmax():
    report = CredibilityReport(ids=["a", "b", "c"],
                               log_s=np.array([-10.0, -5.0, -5.0]),
                               psi=np.zeros(3))
    from reanno.detector import _min_max_psi

    psi = _min_max_psi(report.log_s)
    assert psi == pytest.approx([0.0, 1.0, 1.0], abs=1e-12)


def test_psi_no_same_label_neighbour_scores_zero(two_cluster_store):
    # give one record a label no other record carries
    store = two_cluster_store
    store.records[0].observed_label = 1  # now left-cluster point labelled 1
    idx = build_index(store)
    density = fit_density(store, h=0.5)
    report = credibility_scores(idx, density, store, store.ids, k_cred=10)
    # id000 sits among label-0 points but its nearest 10 may include far 1s;
    # instead assert the -inf rule directly on a constructed isolate
    iso = make_store([[0, 0], [0.1, 0], [0.2, 0], [9, 9]], [1, 0, 0, 0],
                     label_names=("A", "B"))
    idx2 = build_index(iso)
    dens2 = fit_density(iso, h=1.0)
    rep2 = credibility_scores(idx2, dens2, iso, iso.ids, k_cred=2)
    assert rep2.log_s[0] == -np.inf
    assert rep2.psi[0] == 0.0


def test_psi_degenerate_cohort_all_ones():
    store = make_store([[0, 0], [1, 0], [2, 0], [3, 0]], [0, 0, 0, 0])
    idx = build_index(store)
    density = fit_density(store, h=1.0)
    rep = credibility_scores(idx, density, store, ["id001", "id002"], k_cred=1)
    if rep.log_s[0] == rep.log_s[1]:
        assert np.all(rep.psi == 1.0)
    # explicit degenerate cohort: single query
    rep1 = credibility_scores(idx, density, store, ["id001"], k_cred=2)
    assert rep1.psi[0] == 1.0


def test_psi_in_unit_interval_with_extremes(two_cluster_store):
    idx = build_index(two_cluster_store)
    density = fit_density(two_cluster_store, h=0.5)
    rep = credibility_scores(idx, density, two_cluster_store,
                             two_cluster_store.ids, k_cred=10)
    assert np.all(rep.psi >= 0.0) and np.all(rep.psi <= 1.0)
    assert (rep.psi == 1.0).sum() >= 1 and (rep.psi == 0.0).sum() >= 1


def test_psi_scale_invariance(two_cluster_store):
    idx = build_index(two_cluster_store)
    density = fit_density(two_cluster_store, h=0.5)

    class Shifted:
        def __init__(self, base, c):
            self.base, self.c = base, c

        def log_density_matrix(self, vectors):
            return self.base.log_density_matrix(vectors) + self.c

    base = credibility_scores(idx, density, two_cluster_store,
                              two_cluster_store.ids, k_cred=15)
    base = classify_threshold(base, beta=0.5)
    for c in (-50.0, 0.0, 50.0):
        rep = credibility_scores(idx, Shifted(density, c), two_cluster_store,
                                 two_cluster_store.ids, k_cred=15)
        rep = classify_threshold(rep, beta=0.5)
        assert np.allclose(rep.psi, base.psi, atol=1e-12)
        assert rep.verdicts == base.verdicts


def test_threshold_boundary():
    rep = CredibilityReport(ids=["a", "b"], log_s=np.zeros(2),
                            psi=np.array([0.4, 0.5]))
    out = classify_threshold(rep, beta=0.5)
    assert out.verdicts == [INCONSISTENT, CONSISTENT]
    out0 = classify_threshold(rep, beta=0.0)
    assert out0.verdicts == [CONSISTENT, CONSISTENT]
    with pytest.raises(DetectorError):
        classify_threshold(rep, beta=1.5)


def test_threads_match_sequential(two_cluster_store):
    idx = build_index(two_cluster_store)
    density = fit_density(two_cluster_store, h=0.5)
    seq = credibility_scores(idx, density, two_cluster_store,
                             two_cluster_store.ids, k_cred=8, threads=1)
    par = credibility_scores(idx, density, two_cluster_store,
                             two_cluster_store.ids, k_cred=8, threads=4)
    assert np.array_equal(seq.psi, par.psi)
    assert np.array_equal(seq.log_s, par.log_s)


def test_report_round_trip(tmp_path, two_cluster_store):
    idx = build_index(two_cluster_store)
    density = fit_density(two_cluster_store, h=0.5)
    rep = classify_threshold(
        credibility_scores(idx, density, two_cluster_store,
                           two_cluster_store.ids, k_cred=5),
        beta=0.5,
    )
    path = tmp_path / "report.jsonl"
    write_report(rep, path)
    loaded = read_report(path)
    assert loaded.ids == rep.ids
    assert np.allclose(loaded.psi, rep.psi)
    assert loaded.verdicts == rep.verdicts


def test_rank_eval_hand_case():
    # three queries with first-match ranks [1, 2, none] -> MRR 0.5
    vectors = [
        [0.0, 0.0],   # q1, true label 0
        [0.1, 0.0],   # neighbour labelled 0 (rank 1 for q1)
        [10.0, 0.0],  # q2, true label 1
        [10.1, 0.0],  # labelled 0 (rank 1 for q2)
        [10.2, 0.0],  # labelled 1 (rank 2 for q2)
        [20.0, 0.0],  # q3, true label 2 - never matched
        [20.1, 0.0],  # labelled 0
    ]
    labels = [0, 0, 1, 0, 1, 0, 0]
    store = make_store(vectors, labels, label_names=("A", "B", "C"))
    idx = build_index(store)
    revisions = RevisionFile({"id000": 0, "id002": 1, "id005": 2})
    m = rank_eval(idx, store, revisions, k_list=(1, 2))
    assert m.mrr == pytest.approx((1.0 + 0.5 + 0.0) / 3, abs=1e-12)
    assert m.hit_at[1] == pytest.approx(1 / 3)
    assert m.hit_at[2] == pytest.approx(2 / 3)


def test_rank_eval_perfect(two_cluster_store):
    revisions = RevisionFile(
        {r.id: r.observed_label for r in two_cluster_store.records}
    )
    m = rank_eval(build_index(two_cluster_store), two_cluster_store, revisions,
                  k_list=(1, 5, 10))
    assert m.hit_at[1] == 1.0 and m.mrr == 1.0


def test_rank_eval_beyond_k():
    store = make_store([[0, 0], [1, 0], [2, 0]], [0, 0, 1], label_names=("A", "B"))
    revisions = RevisionFile({"id000": 1})
    m = rank_eval(build_index(store), store, revisions, k_list=(1,))
    assert m.hit_at[1] == 0.0


def test_rank_eval_empty_rejected(two_cluster_store):
    with pytest.raises(DetectorError):
        rank_eval(build_index(two_cluster_store), two_cluster_store, RevisionFile({}))


def test_synth_detection_sanity():
    """Flipped points should score lower psi than clean ones on average."""
    store, rev = synth_generate(SynthConfig(clusters=3, dim=8, per_cluster=60,
                                            flip_rate=0.1, seed=5))
    idx = build_index(store)
    density = fit_density(store, h=4.0)
    rep = credibility_scores(idx, density, store, store.ids, k_cred=40)
    flipped = np.array([store.by_id(i).observed_label != rev.entries[i]
                        for i in rep.ids])
    assert rep.psi[flipped].mean() < rep.psi[~flipped].mean()
