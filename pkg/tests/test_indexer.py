import pytest

from hirec.backends import DeterministicChat, HashEmbedder, ScriptedChat
from hirec.corpus import Corpus
from hirec.errors import EmptyResponse
from hirec.indexer import build_index, load_index, save_index, summarize_cover
from hirec.prompts import PromptLibrary

from conftest import make_doc


class _DownChat:
    def chat(self, *args, **kwargs):
        raise EmptyResponse("down")


@pytest.fixture
def prompts():
    return PromptLibrary()


class TestSummarizeCover:
    def test_scripted_summary(self, prompts):
        doc = make_doc("ADBE_2016_10K", [(1, "Adobe Inc. cover page text")])
        chat = ScriptedChat({"summarize": ["Adobe Inc. annual report FY2016"]})
        summary = summarize_cover(doc, chat, prompts)
        assert summary.summary_text == "Adobe Inc. annual report FY2016"
        assert summary.source == "llm"

    def test_fallback_on_chat_failure(self, prompts):
        doc = make_doc("ADBE_2016_10K", [(1, "Adobe Inc. cover page text " * 100)])
        summary = summarize_cover(doc, _DownChat(), prompts)
        assert summary.source == "fallback_raw"
        assert summary.summary_text == doc.pages[0].text[:1024]

    def test_batch_keyed_by_doc_id(self, prompts, tmp_path):
        corpus = Corpus(
            [
                make_doc("A_2020_10K", [(1, "cover a")]),
                make_doc("B_2020_10K", [(1, "cover b")]),
                make_doc("C_2020_10K", [(1, "cover c")]),
            ]
        )
        index = build_index(corpus, DeterministicChat(), HashEmbedder(16), str(tmp_path / "ix"))
        assert sorted(index.summaries) == ["A_2020_10K", "B_2020_10K", "C_2020_10K"]


class TestBuildIndex:
    def test_single_doc_vector_matches_embed(self, tmp_path):
        corpus = Corpus([make_doc("A_2020_10K", [(1, "cover text here")])])
        embedder = HashEmbedder(32)
        index = build_index(corpus, DeterministicChat(), embedder, str(tmp_path / "ix"))
        assert len(index) == 1
        doc_id, vector = index.entries[0]
        summary = index.summaries[doc_id].summary_text
        raw = embedder.embed([summary])[0]
        # stored vectors are float32-quantized copies of the raw embedding
        assert vector.values == pytest.approx(raw.values, abs=1e-7)

    def test_rebuild_is_byte_identical(self, tmp_path):
        corpus = Corpus(
            [
                make_doc("A_2020_10K", [(1, "alpha cover")]),
                make_doc("B_2020_10K", [(1, "beta cover")]),
            ]
        )
        ix = tmp_path / "ix"
        build_index(corpus, DeterministicChat(), HashEmbedder(16), str(ix))
        first = {p.name: p.read_bytes() for p in ix.iterdir()}
        build_index(corpus, DeterministicChat(), HashEmbedder(16), str(ix))
        second = {p.name: p.read_bytes() for p in ix.iterdir()}
        assert first == second

    def test_round_trip_bit_exact(self, tmp_path):
        corpus = Corpus(
            [make_doc(f"D{i}_2020_10K", [(1, f"cover number {i}")]) for i in range(5)]
        )
        ix = str(tmp_path / "ix")
        index = build_index(corpus, DeterministicChat(), HashEmbedder(24), ix)
        loaded = load_index(ix)
        assert loaded.embedder_dim == index.embedder_dim
        assert loaded.entries == index.entries
        assert loaded.summaries == index.summaries

    def test_incremental_skips_unchanged(self, tmp_path):
        corpus = Corpus([make_doc("A_2020_10K", [(1, "cover")])])
        ix = str(tmp_path / "ix")
        build_index(corpus, DeterministicChat(), HashEmbedder(16), ix)
        index = build_index(corpus, DeterministicChat(), HashEmbedder(16), ix)
        assert index.updated_count == 0

    def test_incremental_updates_changed_doc(self, tmp_path):
        ix = str(tmp_path / "ix")
        build_index(
            Corpus([make_doc("A_2020_10K", [(1, "cover v1")])]),
            DeterministicChat(),
            HashEmbedder(16),
            ix,
        )
        index = build_index(
            Corpus(
                [
                    make_doc("A_2020_10K", [(1, "cover v2")]),
                    make_doc("B_2020_10K", [(1, "new doc")]),
                ]
            ),
            DeterministicChat(),
            HashEmbedder(16),
            ix,
        )
        assert index.updated_count == 2
        assert len(index) == 2

    def test_every_doc_indexed_once(self, tmp_path, adobe_corpus):
        index = build_index(
            adobe_corpus, DeterministicChat(), HashEmbedder(16), str(tmp_path / "ix")
        )
        assert sorted(index.doc_ids()) == sorted(adobe_corpus.doc_ids())
        assert len(set(index.doc_ids())) == len(index.doc_ids())
