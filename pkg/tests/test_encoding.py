"""Vocabulary, representation, route-extraction, and fusion checks."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from droidml.apk import CallGraph
from droidml.encoding import (
    FeatureMatrix,
    MatrixKind,
    NgramEncoder,
    SequenceEncoder,
    UsageEncoder,
    Vocabulary,
    api_sequence,
    build_token_vocab,
    build_vocab,
    concat_matrices,
    encode_bags,
    encode_frequency,
    encode_sequence,
    encode_usage,
    extract_api_routes,
    ngrams,
    tcp_feature_matrix,
)
from droidml.errors import (
    ColumnCollision,
    DimensionMismatch,
    EmptyVocabulary,
    NotFittedError,
    RouteExplosion,
    RowMismatch,
)
from droidml.pcap import TCP_FEATURE_NAMES
from droidml.records import FeatureKind, FeatureRecord, FeatureReport, MethodRef, Source

from conftest import fake_app_id, matrix_from_array


def api_report(i: int, counts: dict[str, int]) -> FeatureReport:
    records = {FeatureRecord(FeatureKind.API_CALL, name) for name in counts}
    return FeatureReport(
        app_id=fake_app_id(i),
        source=Source.STATIC,
        records=records,
        counts={FeatureRecord(FeatureKind.API_CALL, n): c for n, c in counts.items() if c != 1},
    )


def api_vocab(*names: str, kind: MatrixKind = MatrixKind.COUNT) -> Vocabulary:
    return Vocabulary(tuple(f"ApiCall::{n}" for n in names), kind)


# ---------------------------------------------------------------------------
# usage / frequency


def test_frequency_row_matches_hand_example():
    vocab = api_vocab("API_1", "API_2", "API_3")
    report = api_report(0, {"API_1": 5, "API_2": 4})
    m = encode_frequency([report], vocab)
    assert m.toarray().tolist() == [[5.0, 4.0, 0.0]]
    assert m.vocab.kind is MatrixKind.COUNT


def test_usage_row_ignores_out_of_vocab():
    vocab = api_vocab("API_1", "API_2")
    report = api_report(0, {"API_1": 1, "API_9": 3})
    m = encode_usage([report], vocab)
    assert m.toarray().tolist() == [[1.0, 0.0]]
    assert m.vocab.kind is MatrixKind.BINARY


def test_empty_report_encodes_to_zero_row():
    vocab = api_vocab("API_1")
    report = FeatureReport(app_id=fake_app_id(0), source=Source.STATIC)
    assert encode_usage([report], vocab).toarray().tolist() == [[0.0]]
    assert encode_frequency([report], vocab).cells == {}


def test_usage_frequency_coupling(rng: np.random.Generator):
    names = [f"API_{j}" for j in range(12)]
    reports = []
    for i in range(40):
        picked = rng.choice(len(names), size=int(rng.integers(0, 8)), replace=False)
        reports.append(
            api_report(i, {names[j]: int(rng.integers(1, 9)) for j in picked})
        )
    vocab = build_vocab(reports, kinds=(FeatureKind.API_CALL,))
    usage = encode_usage(reports, vocab).toarray()
    freq = encode_frequency(reports, vocab).toarray()
    assert np.array_equal(usage == 1, freq > 0)
    assert set(np.unique(usage)) <= {0.0, 1.0}


def test_frequency_reads_report_multiplicities():
    vocab = api_vocab("API_1")
    report = api_report(0, {"API_1": 7})
    assert encode_frequency([report], vocab).toarray()[0, 0] == 7.0
    # a record with no stored count defaults to one occurrence
    assert encode_frequency([api_report(1, {"API_1": 1})], vocab).toarray()[0, 0] == 1.0


# ---------------------------------------------------------------------------
# vocabulary construction


def test_build_vocab_min_support():
    a = api_report(0, {"X": 1, "Y": 1})
    b = api_report(1, {"X": 2})
    c = api_report(2, {"Z": 1})
    vocab = build_vocab([a, b, c], min_support=2)
    assert vocab.entries == ("ApiCall::X",)
    with pytest.raises(EmptyVocabulary):
        build_vocab([a, b, c], min_support=4)


def test_build_vocab_first_seen_order_sorted_within_report():
    first = api_report(0, {"beta": 1, "alpha": 1})
    second = api_report(1, {"beta": 1, "aardvark": 1})
    vocab = build_vocab([first, second])
    assert vocab.entries == (
        "ApiCall::alpha",
        "ApiCall::beta",
        "ApiCall::aardvark",
    )


def test_build_vocab_kind_filter():
    report = FeatureReport(
        app_id=fake_app_id(0),
        source=Source.HYBRID,
        records={
            FeatureRecord(FeatureKind.API_CALL, "a"),
            FeatureRecord(FeatureKind.SYSCALL_NAME, "read"),
        },
    )
    vocab = build_vocab([report], kinds=(FeatureKind.SYSCALL_NAME,))
    assert vocab.entries == ("SyscallName::read",)


def test_build_token_vocab_counts_each_source_once():
    sources = [("a" * 64, ["x", "x", "x", "y"]), ("b" * 64, ["y"])]
    vocab = build_token_vocab(sources, min_support=2)
    assert vocab.entries == ("y",)
    assert build_token_vocab(sources).entries == ("x", "y")
    with pytest.raises(EmptyVocabulary):
        build_token_vocab(sources, min_support=3)


def test_vocabulary_rejects_duplicate_names():
    with pytest.raises(ColumnCollision):
        Vocabulary(("a", "a"), MatrixKind.COUNT)


def test_vocabulary_fingerprint_tracks_order_and_kind():
    base = Vocabulary(("a", "b"), MatrixKind.COUNT)
    assert base.fingerprint() == Vocabulary(("a", "b"), MatrixKind.COUNT).fingerprint()
    assert base.fingerprint() != Vocabulary(("b", "a"), MatrixKind.COUNT).fingerprint()
    assert base.fingerprint() != Vocabulary(("a", "b"), MatrixKind.BINARY).fingerprint()


def test_encoding_invariant_to_report_order_at_encode_time(rng: np.random.Generator):
    reports = [
        api_report(i, {f"API_{j}": int(rng.integers(1, 5)) for j in rng.choice(9, 4, replace=False)})
        for i in range(10)
    ]
    vocab = build_vocab(reports)
    forward = encode_frequency(reports, vocab)
    backward = encode_frequency(list(reversed(reports)), vocab)
    for i, rid in enumerate(forward.row_ids):
        j = backward.row_ids.index(rid)
        assert np.array_equal(forward.toarray()[i], backward.toarray()[j])


# ---------------------------------------------------------------------------
# sequence encoding


def test_sequence_first_worked_example():
    vocab = Vocabulary(("a", "b", "c", "d"), MatrixKind.NUMERIC)
    assert encode_sequence(["a", "c", "a", "d"], vocab, max_len=4).tolist() == [1, 3, 1, 4]


def test_sequence_reversed_alphabet_maps_last_token_to_one():
    # d->4, c->3, b->2, a->1 under the 1-based mapping rule
    vocab = Vocabulary(("a", "b", "c", "d"), MatrixKind.NUMERIC)
    assert encode_sequence(["d", "c", "b", "a"], vocab, max_len=4).tolist() == [4, 3, 2, 1]


def test_sequence_padding_truncation_and_oov():
    vocab = Vocabulary(("a", "b"), MatrixKind.NUMERIC)
    assert encode_sequence([], vocab, max_len=3).tolist() == [0, 0, 0]
    assert encode_sequence(["a", "zzz", "b"], vocab, max_len=3).tolist() == [1, 0, 2]
    assert encode_sequence(["a", "b", "a", "b"], vocab, max_len=2).tolist() == [1, 2]
    with pytest.raises(DimensionMismatch):
        encode_sequence(["a"], vocab, max_len=0)


# ---------------------------------------------------------------------------
# n-grams


def test_bigram_hand_example():
    bag = ngrams(["op1", "op2", "op3", "op4"], 2)
    assert bag == {"op1|op2": 1, "op2|op3": 1, "op3|op4": 1}


def test_unigram_is_token_multiset():
    assert ngrams(["a", "b", "a"], 1) == {"a": 2, "b": 1}


def test_window_longer_than_stream_is_empty():
    assert ngrams(["a", "b", "c"], 5) == {}
    with pytest.raises(DimensionMismatch):
        ngrams(["a"], 0)


@given(
    tokens=st.lists(st.sampled_from("abcde"), max_size=30),
    n=st.integers(min_value=1, max_value=6),
)
def test_ngram_count_conservation(tokens: list[str], n: int):
    bag = ngrams(tokens, n)
    assert sum(bag.values()) == max(0, len(tokens) - n + 1)


# ---------------------------------------------------------------------------
# route extraction


def node(class_name: str, method: str = "m") -> MethodRef:
    return MethodRef(class_name, method, "()V")


def test_chain_filters_non_platform_nodes():
    graph = CallGraph(
        nodes=[node("com.app.Entry"), node("com.app.Helper"), node("android.util.Log", "d")],
        edges=[(0, 1), (1, 2)],
        entry_points=[0],
    )
    routes = extract_api_routes(graph)
    assert routes == [["android.util.Log.d()V"]]
    assert routes == [[graph.nodes[2].canonical()]]


def test_branching_routes_follow_edge_order():
    a1 = node("android.net.Uri", "parse")
    a2 = node("android.util.Log", "d")
    graph = CallGraph(
        nodes=[node("com.app.Entry"), a1, a2],
        edges=[(0, 1), (0, 2)],
        entry_points=[0],
    )
    routes = extract_api_routes(graph)
    assert routes == [[a1.canonical()], [a2.canonical()]]
    assert api_sequence(graph, fake_app_id(0)).tokens == [a1.canonical(), a2.canonical()]


def test_self_loop_does_not_descend():
    api = node("android.util.Log", "d")
    graph = CallGraph(nodes=[api], edges=[(0, 0)], entry_points=[0])
    assert extract_api_routes(graph) == [[api.canonical()]]


def test_cycle_breaks_at_repeat_within_route():
    graph = CallGraph(
        nodes=[node("android.a.A"), node("android.b.B")],
        edges=[(0, 1), (1, 0)],
        entry_points=[0],
    )
    routes = extract_api_routes(graph)
    assert routes == [[graph.nodes[0].canonical(), graph.nodes[1].canonical()]]


def test_node_may_repeat_across_routes():
    # diamond: shared sink appears in both routes
    sink = node("android.z.Sink")
    graph = CallGraph(
        nodes=[node("com.app.E"), node("android.l.L"), node("android.r.R"), sink],
        edges=[(0, 1), (0, 2), (1, 3), (2, 3)],
        entry_points=[0],
    )
    routes = extract_api_routes(graph)
    assert len(routes) == 2
    assert all(r[-1] == sink.canonical() for r in routes)


def test_entry_point_order_drives_concatenation():
    a = node("android.a.A")
    b = node("android.b.B")
    graph = CallGraph(nodes=[a, b], edges=[], entry_points=[1, 0])
    assert api_sequence(graph, fake_app_id(0)).tokens == [b.canonical(), a.canonical()]


def test_route_extraction_is_deterministic():
    graph = CallGraph(
        nodes=[node("com.app.E"), node("android.x.X"), node("android.y.Y")],
        edges=[(0, 2), (0, 1)],
        entry_points=[0],
    )
    assert extract_api_routes(graph) == extract_api_routes(graph)


def test_route_cap_raises():
    # ladder of width-2 layers doubles the route count per layer
    layers = 12
    nodes = [node("com.app.Entry")]
    edges = []
    prev = [0]
    for i in range(layers):
        left = len(nodes)
        nodes.append(node(f"android.l{i}.A"))
        nodes.append(node(f"android.l{i}.B"))
        for p in prev:
            edges.append((p, left))
            edges.append((p, left + 1))
        prev = [left, left + 1]
    graph = CallGraph(nodes=nodes, edges=edges, entry_points=[0])
    with pytest.raises(RouteExplosion):
        extract_api_routes(graph, cap=100)
    assert len(extract_api_routes(graph, cap=10_000)) == 2**layers


# ---------------------------------------------------------------------------
# matrix text form


def test_matrix_text_round_trip_count():
    m = matrix_from_array(np.array([[0, 2], [3, 0]]), MatrixKind.COUNT)
    text = m.to_text()
    assert text.splitlines()[0] == "#vocab 2 Count"
    back = FeatureMatrix.from_text(text)
    assert back.vocab == m.vocab
    assert back.row_ids == m.row_ids
    assert back.cells == m.cells
    assert back.to_text() == text


def test_matrix_text_round_trip_numeric_exact():
    m = matrix_from_array(np.array([[0.1, 0.0], [1e-17, 2.5]]), MatrixKind.NUMERIC)
    back = FeatureMatrix.from_text(m.to_text())
    assert back.cells == m.cells


def test_matrix_text_is_byte_stable():
    m = matrix_from_array(np.array([[1, 0, 4]]), MatrixKind.COUNT)
    assert m.to_text() == m.to_text()
    assert m.to_text().endswith("\n")


@pytest.mark.parametrize(
    "text",
    [
        "",
        "#vocab x Count\n",
        "#vocab 2 Weird\na\nb\n#rows 0\n",
        "#vocab 2 Count\na\n",
        "#vocab 1 Count\na\n0 0\n#rows 0\n",
        "#vocab 1 Count\na\n0 0 1\n",
        "#vocab 1 Count\na\n#rows 2\n" + fake_app_id(0) + "\n",
    ],
)
def test_matrix_text_rejects_malformed(text: str):
    with pytest.raises(DimensionMismatch):
        FeatureMatrix.from_text(text)


def test_matrix_value_validation():
    vocab = Vocabulary(("a",), MatrixKind.BINARY)
    with pytest.raises(DimensionMismatch):
        FeatureMatrix(vocab=vocab, row_ids=[fake_app_id(0)], cells={(0, 0): 2})
    count_vocab = Vocabulary(("a",), MatrixKind.COUNT)
    with pytest.raises(DimensionMismatch):
        FeatureMatrix(vocab=count_vocab, row_ids=[fake_app_id(0)], cells={(0, 0): 1.5})
    with pytest.raises(DimensionMismatch):
        FeatureMatrix(vocab=count_vocab, row_ids=[fake_app_id(0)], cells={(0, 1): 1})
    numeric = Vocabulary(("a",), MatrixKind.NUMERIC)
    with pytest.raises(DimensionMismatch):
        FeatureMatrix(vocab=numeric, row_ids=[fake_app_id(0)], cells={(0, 0): float("nan")})


def test_select_columns_and_rows():
    m = matrix_from_array(np.arange(12).reshape(3, 4), MatrixKind.COUNT)
    picked = m.select_columns([3, 1])
    assert picked.vocab.entries == ("f003", "f001")
    assert picked.toarray().tolist() == [[3, 1], [7, 5], [11, 9]]
    rows = m.select_rows([2, 0])
    assert rows.row_ids == [m.row_ids[2], m.row_ids[0]]
    assert rows.toarray().tolist() == [[8, 9, 10, 11], [0, 1, 2, 3]]
    with pytest.raises(DimensionMismatch):
        m.select_columns([0, 0])
    with pytest.raises(DimensionMismatch):
        m.select_rows([5])


# ---------------------------------------------------------------------------
# fusion


def test_concat_shapes_and_tags():
    left = matrix_from_array(np.ones((2, 2)), MatrixKind.BINARY)
    right = matrix_from_array(np.arange(1, 7).reshape(2, 3), MatrixKind.COUNT)
    fused = concat_matrices(left, right, left_tag="perm", right_tag="op")
    assert (fused.n_rows, fused.n_cols) == (2, 5)
    assert fused.vocab.entries[:2] == ("perm:f000", "perm:f001")
    assert fused.vocab.entries[2] == "op:f000"
    assert fused.vocab.kind is MatrixKind.NUMERIC
    assert fused.toarray().tolist() == [[1, 1, 1, 2, 3], [1, 1, 4, 5, 6]]


def test_concat_name_collision_without_tags():
    left = matrix_from_array(np.ones((1, 1)), MatrixKind.BINARY)
    right = matrix_from_array(np.ones((1, 1)), MatrixKind.BINARY)
    with pytest.raises(ColumnCollision):
        concat_matrices(left, right)
    fused = concat_matrices(left, right, right_tag="r")
    assert fused.vocab.entries == ("f000", "r:f000")
    assert fused.vocab.kind is MatrixKind.BINARY


def test_concat_zero_column_identity():
    m = matrix_from_array(np.array([[1, 0], [0, 2]]), MatrixKind.COUNT)
    empty = FeatureMatrix(
        vocab=Vocabulary((), MatrixKind.BINARY), row_ids=list(m.row_ids), cells={}
    )
    fused = concat_matrices(m, empty)
    assert fused.vocab.entries == m.vocab.entries
    assert fused.vocab.kind is MatrixKind.COUNT
    assert fused.cells == m.cells


def test_concat_row_mismatch_names_first_difference():
    left = matrix_from_array(np.ones((2, 1)), MatrixKind.BINARY)
    right = matrix_from_array(np.ones((2, 1)), MatrixKind.BINARY)
    right.row_ids = [right.row_ids[1], right.row_ids[0]]
    with pytest.raises(RowMismatch) as err:
        concat_matrices(left, right, right_tag="r")
    assert left.row_ids[0] in str(err.value)
    short = right.select_rows([0])
    with pytest.raises(RowMismatch):
        concat_matrices(left, short, right_tag="r")


def test_concat_is_associative_over_fixed_rows(rng: np.random.Generator):
    def named(block: str, arr: np.ndarray) -> FeatureMatrix:
        m = matrix_from_array(arr, MatrixKind.COUNT)
        return FeatureMatrix(
            vocab=Vocabulary(tuple(f"{block}{n}" for n in m.vocab.entries), m.vocab.kind),
            row_ids=m.row_ids,
            cells=m.cells,
        )

    a = named("a", rng.integers(0, 4, size=(3, 2)))
    b = named("b", rng.integers(0, 4, size=(3, 3)))
    c = named("c", rng.integers(0, 4, size=(3, 1)))
    left = concat_matrices(concat_matrices(a, b), c)
    right = concat_matrices(a, concat_matrices(b, c))
    assert left.vocab == right.vocab
    assert left.cells == right.cells


def test_tcp_feature_matrix():
    row = [50.0, 1.0, 1.0, 60.0, 0.0, 2.0 / 3.0, 1.0]
    m = tcp_feature_matrix([(fake_app_id(0), row)])
    assert m.vocab.entries == tuple(TCP_FEATURE_NAMES)
    assert m.vocab.kind is MatrixKind.NUMERIC
    assert (0, 4) not in m.cells
    assert m.toarray().tolist() == [row]
    with pytest.raises(DimensionMismatch):
        tcp_feature_matrix([(fake_app_id(0), [1.0, 2.0])])


def test_encode_bags_length_check():
    vocab = Vocabulary(("x",), MatrixKind.COUNT)
    with pytest.raises(DimensionMismatch):
        encode_bags([{"x": 1}], vocab, row_ids=[fake_app_id(0), fake_app_id(1)])


# ---------------------------------------------------------------------------
# estimator wrappers


def test_usage_encoder_estimator():
    reports = [api_report(0, {"a": 1}), api_report(1, {"b": 2})]
    enc = UsageEncoder(kinds=(FeatureKind.API_CALL,))
    with pytest.raises(NotFittedError):
        enc.transform(reports)
    m = enc.fit_transform(reports)
    assert m.toarray().tolist() == [[1, 0], [0, 1]]
    assert enc.get_params()["min_support"] == 1


def test_ngram_encoder_representations():
    sources = [("a" * 64, ["x", "y", "x", "y"]), ("b" * 64, ["x", "y"])]
    freq = NgramEncoder(n=2, representation="frequency").fit_transform(sources)
    assert freq.vocab.entries == ("x|y", "y|x")
    assert freq.toarray().tolist() == [[2, 1], [1, 0]]
    usage = NgramEncoder(n=2, representation="usage").fit_transform(sources)
    assert usage.vocab.kind is MatrixKind.BINARY
    assert usage.toarray().tolist() == [[1, 1], [1, 0]]
    with pytest.raises(ValueError):
        NgramEncoder(representation="tfidf")


def test_ngram_encoder_min_support_prunes():
    sources = [("a" * 64, ["x", "y"]), ("b" * 64, ["x", "z"])]
    enc = NgramEncoder(n=1, min_support=2).fit(sources)
    assert enc.vocab_.entries == ("x",)


def test_sequence_encoder_positions_and_ids():
    sources = [("a" * 64, ["p", "q", "p"]), ("b" * 64, ["q"])]
    enc = SequenceEncoder(max_len=5)
    m = enc.fit_transform(sources)
    assert m.vocab.entries == ("t0", "t1", "t2", "t3", "t4")
    assert m.toarray().tolist() == [[1, 2, 1, 0, 0], [2, 0, 0, 0, 0]]
    wide = SequenceEncoder(max_len=2048).fit_transform(sources)
    assert wide.vocab.entries[0] == "t0000"
    assert wide.n_cols == 2048


def test_sequence_encoder_oov_cells_absent():
    enc = SequenceEncoder(max_len=3).fit([("a" * 64, ["p"])])
    m = enc.transform([("b" * 64, ["zzz", "p"])])
    assert m.toarray().tolist() == [[0, 1, 0]]
    assert (0, 0) not in m.cells
