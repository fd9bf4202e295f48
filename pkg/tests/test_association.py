"""Association scoring: number matching, tf-idf lexical scores, thresholding,
the remote wire client, and the LLM prompt adapter."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from tablescope.association import (
    EmptyContentError,
    HeuristicScorer,
    ParseFailure,
    ProtocolError,
    RemoteScorer,
    ScorerConfig,
    ScorerKind,
    TransportError,
    build_llm_prompt,
    decide,
    extract_table_numbers,
    heuristic_score,
    own_table_number,
    parse_llm_reply,
    remote_score_batch,
    remote_score_query,
)
from tablescope.lexical import DocumentVocabulary, lexical_score, tokenize
from tablescope.model import BlockType

from conftest import WORDS, block_dict, build_doc


# ---------------------------------------------------------------------------
# Independent oracle: a from-scratch tf-idf cosine, sharing no code with the
# implementation under test.
# ---------------------------------------------------------------------------


def oracle_tfidf_cosine(text_a: str, text_b: str, block_texts: list[str]) -> float:
    def toks(s):
        out, cur = [], []
        for ch in s.lower():
            if ch.isascii() and (ch.isalpha() or ch.isdigit()):
                cur.append(ch)
            elif cur:
                out.append("".join(cur))
                cur = []
        if cur:
            out.append("".join(cur))
        return out

    docs = [toks(t) for t in block_texts if toks(t)]
    n = len(docs)
    df = Counter()
    for d in docs:
        df.update(set(d))

    def vec(s):
        counts = Counter(toks(s))
        return {t: c * math.log(1.0 + n / (1.0 + df.get(t, 0))) for t, c in counts.items()}

    va, vb = vec(text_a), vec(text_b)
    if not va or not vb:
        return 0.0
    dot = sum(va[t] * vb.get(t, 0.0) for t in va)
    na = math.sqrt(sum(v * v for v in va.values()))
    nb = math.sqrt(sum(v * v for v in vb.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, max(0.0, dot / (na * nb)))


class TestTokenize:
    def test_basic(self):
        assert tokenize("The baseline, error-rate 0.31!") == ["the", "baseline", "error", "rate", "0", "31"]

    def test_empty(self):
        assert tokenize("---") == []


class TestLexicalScore:
    FIXTURE_TEXTS = [
        "Table 3: error rate 0.31 baseline",
        "the baseline error rate is shown",
        "gradient updates converge quickly",
        "- item one - item two",
        "Results and Discussion",
    ]

    def _doc(self):
        return build_doc(
            "d1",
            [
                [
                    block_dict("t1", "Table", self.FIXTURE_TEXTS[0]),
                    block_dict("s1", "Text", self.FIXTURE_TEXTS[1]),
                    block_dict("s2", "Text", self.FIXTURE_TEXTS[2]),
                    block_dict("s3", "List", self.FIXTURE_TEXTS[3]),
                    block_dict("h1", "Title", self.FIXTURE_TEXTS[4]),
                ]
            ],
        )

    def test_identical_token_multisets_score_one(self):
        doc = self._doc()
        vocab = DocumentVocabulary.from_document(doc)
        assert vocab.similarity("alpha beta beta", "alpha beta beta") == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_vocabulary_scores_zero(self):
        vocab = DocumentVocabulary.from_document(self._doc())
        assert vocab.similarity("alpha beta", "gamma delta") == 0.0

    def test_empty_side_scores_zero(self):
        vocab = DocumentVocabulary.from_document(self._doc())
        assert vocab.similarity("", "baseline") == 0.0

    def test_against_independent_oracle(self):
        # both implementations must agree to 1e-9 on the 5-block fixture
        doc = self._doc()
        vocab = DocumentVocabulary.from_document(doc)
        table = doc.block_by_id("t1")
        text = doc.block_by_id("s1")
        got = lexical_score(table, text, vocab)
        want = oracle_tfidf_cosine(table.text, text.text, self.FIXTURE_TEXTS)
        assert got == pytest.approx(want, abs=1e-9)

    def test_oracle_agreement_on_random_documents(self):
        rng = np.random.default_rng(5)
        for _ in range(15):
            texts = [" ".join(rng.choice(WORDS, size=int(rng.integers(0, 10)))) for _ in range(6)]
            vocab = DocumentVocabulary(texts)
            a, b = texts[0], texts[1]
            assert vocab.similarity(a, b) == pytest.approx(oracle_tfidf_cosine(a, b, texts), abs=1e-9)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(6)
        texts = [" ".join(rng.choice(WORDS, size=int(rng.integers(1, 10)))) for _ in range(8)]
        vocab = DocumentVocabulary(texts)
        for i in range(len(texts)):
            for j in range(len(texts)):
                s_ij = vocab.similarity(texts[i], texts[j])
                assert s_ij == vocab.similarity(texts[j], texts[i])
                assert 0.0 <= s_ij <= 1.0

    def test_kind_preconditions(self):
        doc = self._doc()
        vocab = DocumentVocabulary.from_document(doc)
        with pytest.raises(ValueError):
            lexical_score(doc.block_by_id("s1"), doc.block_by_id("s2"), vocab)
        with pytest.raises(ValueError):
            lexical_score(doc.block_by_id("t1"), doc.block_by_id("h1"), vocab)


class TestExtractTableNumbers:
    def test_direct_reference(self):
        assert extract_table_numbers("As shown in Table 3, accuracy improves.").numbers == {3}

    def test_no_numbered_reference(self):
        assert extract_table_numbers("Tables are useful.").numbers == frozenset()

    def test_roman_and_arabic_mixed(self):
        # oracle: hand-enumerated matches; roman II normalizes to 2
        assert extract_table_numbers("Table II and Table 4 report ...").numbers == {2, 4}

    def test_tab_abbreviation(self):
        assert extract_table_numbers("see Tab. 7 for details").numbers == {7}

    def test_case_insensitive(self):
        assert extract_table_numbers("TABLE 5 and table iv").numbers == {5, 4}

    def test_roman_beyond_twenty_ignored(self):
        assert extract_table_numbers("Table XXI shows").numbers == frozenset()
        assert extract_table_numbers("Table XX shows").numbers == {20}

    def test_arabic_bounds(self):
        assert extract_table_numbers("Table 0 and Table 1000").numbers == frozenset()
        assert extract_table_numbers("Table 999").numbers == {999}

    def test_malformed_roman_ignored(self):
        assert extract_table_numbers("Table iix broken").numbers == frozenset()

    def test_duplicates_collapse(self):
        assert extract_table_numbers("Table 2 ... Table 2 again").numbers == {2}

    def test_idempotent_under_duplication(self):
        rng = np.random.default_rng(13)
        snippets = ["Table 3 here", "nothing", "Tab. 9 and Table II", "Table 1000"]
        for _ in range(20):
            text = " ".join(rng.choice(snippets, size=int(rng.integers(1, 5))))
            once = extract_table_numbers(text).numbers
            doubled = extract_table_numbers(text + " " + text).numbers
            assert once == doubled

    def test_own_table_number_first_match(self):
        assert own_table_number("Table 2: results; cf. Table 5") == 2
        assert own_table_number("no reference") is None


class TestHeuristicScore:
    def _doc(self):
        return build_doc(
            "d1",
            [
                [
                    block_dict("t1", "Table", "Table 2: throughput and latency"),
                    block_dict("s1", "Text", "Table 2 summarizes results"),
                    block_dict("s2", "Text", "completely disjoint words here"),
                    block_dict("s3", "Text", "Table 5 mentions the throughput latency figures"),
                ]
            ],
        )

    def test_number_match_forces_one(self):
        doc = self._doc()
        vocab = DocumentVocabulary.from_document(doc)
        cfg = ScorerConfig()
        score = heuristic_score(doc.block_by_id("t1"), 2, doc.block_by_id("s1"), vocab, cfg)
        assert score == 1.0

    def test_no_number_disjoint_scores_zero(self):
        doc = self._doc()
        vocab = DocumentVocabulary.from_document(doc)
        cfg = ScorerConfig()
        score = heuristic_score(doc.block_by_id("t1"), None, doc.block_by_id("s2"), vocab, cfg)
        assert score == 0.0

    def test_other_number_falls_back_to_weighted_cosine(self):
        # oracle: composition of the two independently tested sub-operations
        doc = self._doc()
        vocab = DocumentVocabulary.from_document(doc)
        cfg = ScorerConfig(lexical_weight=0.7)
        table, text = doc.block_by_id("t1"), doc.block_by_id("s3")
        got = heuristic_score(table, 2, text, vocab, cfg)
        assert got == pytest.approx(0.7 * lexical_score(table, text, vocab), abs=1e-12)
        assert got < 1.0

    def test_number_matching_dominance_property(self):
        rng = np.random.default_rng(17)
        cfg = ScorerConfig(lexical_weight=1.0)
        for trial in range(20):
            n_ref = int(rng.integers(1, 12))
            doc = build_doc(
                "d1",
                [
                    [
                        block_dict("t1", "Table", f"Table {n_ref}: " + " ".join(rng.choice(WORDS, 4))),
                        block_dict("s1", "Text", f"Table {n_ref} " + " ".join(rng.choice(WORDS, 6))),
                    ]
                ],
            )
            vocab = DocumentVocabulary.from_document(doc)
            score = heuristic_score(doc.block_by_id("t1"), n_ref, doc.block_by_id("s1"), vocab, cfg)
            assert score == 1.0

    def test_scorer_class_matches_function(self):
        doc = self._doc()
        cfg = ScorerConfig(lexical_weight=0.9)
        scorer = HeuristicScorer(cfg)
        vocab = DocumentVocabulary.from_document(doc)
        table = doc.block_by_id("t1")
        number = own_table_number(table.text)
        pairs = [(table, doc.block_by_id(s)) for s in ("s1", "s2", "s3")]
        got = scorer.score_pairs(doc, pairs)
        want = [heuristic_score(table, number, text, vocab, cfg) for _, text in pairs]
        assert got == want


class TestDecide:
    def test_above_threshold(self):
        assert decide(0.9, ScorerConfig(theta=0.5)) == 1

    def test_boundary_inclusive(self):
        assert decide(0.5, ScorerConfig(theta=0.5)) == 1

    def test_zero_cases(self):
        assert decide(0.0, ScorerConfig(theta=0.0)) == 1
        assert decide(0.0, ScorerConfig(theta=0.1)) == 0

    def test_monotonicity(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            p, t1, t2 = sorted(rng.random(2))[0], *sorted(rng.random(2))
            assert decide(p, ScorerConfig(theta=t2)) <= decide(p, ScorerConfig(theta=t1))
            p1, p2 = sorted(rng.random(2))
            theta = float(rng.random())
            assert decide(p1, ScorerConfig(theta=theta)) <= decide(p2, ScorerConfig(theta=theta))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScorerConfig(theta=1.5)
        with pytest.raises(ValueError):
            ScorerConfig(lexical_weight=-0.1)
        with pytest.raises(ValueError):
            ScorerConfig(batch_size=0)


class TestRemoteClient:
    def test_echo_stub(self, score_server):
        cfg = ScorerConfig(scorer_kind=ScorerKind.REMOTE, remote_endpoint=score_server.endpoint)
        scores = remote_score_batch([("a", "b"), ("c", "d"), ("e", "f")], cfg)
        assert scores == [0.5, 0.5, 0.5]
        path, body = score_server.requests[0]
        assert path == "/score"
        assert body == {"pairs": [{"table_text": "a", "text_text": "b"}, {"table_text": "c", "text_text": "d"}, {"table_text": "e", "text_text": "f"}]}

    def test_wrong_count_rejected(self, score_server):
        score_server.behavior = lambda path, body: (200, {"scores": [0.1, 0.2]})
        cfg = ScorerConfig(remote_endpoint=score_server.endpoint)
        with pytest.raises(ProtocolError):
            remote_score_batch([("a", "b"), ("c", "d"), ("e", "f")], cfg)

    def test_out_of_range_rejected(self, score_server):
        score_server.behavior = lambda path, body: (200, {"scores": [1.3]})
        cfg = ScorerConfig(remote_endpoint=score_server.endpoint)
        with pytest.raises(ProtocolError):
            remote_score_batch([("a", "b")], cfg)

    def test_malformed_reply_rejected(self, score_server):
        score_server.behavior = lambda path, body: (200, {"wrong": True})
        cfg = ScorerConfig(remote_endpoint=score_server.endpoint)
        with pytest.raises(ProtocolError):
            remote_score_batch([("a", "b")], cfg)

    def test_http_error_rejected(self, score_server):
        score_server.behavior = lambda path, body: (400, {"error": "bad"})
        cfg = ScorerConfig(remote_endpoint=score_server.endpoint)
        with pytest.raises(ProtocolError):
            remote_score_batch([("a", "b")], cfg)

    def test_unreachable_endpoint(self):
        cfg = ScorerConfig(remote_endpoint="http://127.0.0.1:1", timeout_s=0.5)
        with pytest.raises(TransportError):
            remote_score_batch([("a", "b")], cfg)

    def test_empty_batch_rejected(self, score_server):
        cfg = ScorerConfig(remote_endpoint=score_server.endpoint)
        with pytest.raises(ValueError):
            remote_score_batch([], cfg)

    def test_order_and_length_preserved(self, score_server):
        # recording stub scores pair i as i/100
        def behavior(path, body):
            return 200, {"scores": [hash(p["table_text"]) % 100 / 100 for p in body["pairs"]]}

        score_server.behavior = behavior
        cfg = ScorerConfig(remote_endpoint=score_server.endpoint)
        pairs = [(f"t{i}", f"s{i}") for i in range(10)]
        scores = remote_score_batch(pairs, cfg)
        assert scores == [hash(f"t{i}") % 100 / 100 for i in range(10)]

    def test_score_query(self, score_server):
        score_server.behavior = lambda path, body: (200, {"scores": [-1.5, 3.25]})
        cfg = ScorerConfig(remote_endpoint=score_server.endpoint)
        assert remote_score_query("q", ["ta", "tb"], cfg) == [-1.5, 3.25]
        assert score_server.requests[-1] == ("/score_query", {"query": "q", "tables": ["ta", "tb"]})

    def test_remote_scorer_chunks_batches(self, score_server):
        def behavior(path, body):
            return 200, {"scores": [float(p["text_text"] == "t") for p in body["pairs"]]}

        score_server.behavior = behavior
        cfg = ScorerConfig(
            scorer_kind=ScorerKind.REMOTE,
            remote_endpoint=score_server.endpoint,
            batch_size=8,
            max_in_flight=3,
        )
        doc = build_doc(
            "d1",
            [
                [block_dict("t1", "Table", "t")]
                + [block_dict(f"s{i:02d}", "Text", "x" if i % 2 else "t") for i in range(20)]
            ],
        )
        scorer = RemoteScorer(cfg)
        table = doc.block_by_id("t1")
        pairs = [(table, doc.block_by_id(f"s{i:02d}")) for i in range(20)]
        scores = scorer.score_pairs(doc, pairs)
        assert len(score_server.requests) == 3  # ceil(20 / 8)
        assert all(len(req[1]["pairs"]) <= 8 for req in score_server.requests)
        assert scores == [float(p[1].text == "t") for p in pairs]


class TestLlmPromptAdapter:
    def test_prompt_contains_contract_lines(self):
        prompt = build_llm_prompt("A|B", "text")
        assert "Reply `1' if the text block describes" in prompt
        assert "Reply `0' if the text block is unrelated" in prompt
        assert "A|B" in prompt and "text" in prompt
        assert "[table_content]" not in prompt and "[text_content]" not in prompt

    def test_empty_content_rejected(self):
        with pytest.raises(EmptyContentError):
            build_llm_prompt("  ", "text")
        with pytest.raises(EmptyContentError):
            build_llm_prompt("table", "\n")

    def test_reply_trimmed_parse(self):
        assert parse_llm_reply(" 1\n") == 1
        assert parse_llm_reply("0") == 0

    def test_nonconforming_reply(self):
        with pytest.raises(ParseFailure):
            parse_llm_reply("The text relates")
