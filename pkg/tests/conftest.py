import pytest

from hirec.backends import DeterministicChat, HashEmbedder, OverlapReranker
from hirec.corpus import Corpus, DocumentRecord, PageText
from hirec.indexer import build_index
from hirec.pipeline import Backends
from hirec.prompts import PromptLibrary


def make_doc(doc_id: str, pages: list[tuple[int, str]], form_type: str = "10-K") -> DocumentRecord:
    ticker = doc_id.split("_", 1)[0]
    return DocumentRecord(
        doc_id=doc_id,
        ticker=ticker,
        company_name=ticker,
        form_type=form_type,
        fiscal_period=doc_id.split("_")[1] if "_" in doc_id else "",
        pages=[PageText(page_no=n, text=t) for n, t in pages],
    )


@pytest.fixture
def prompts():
    return PromptLibrary()


@pytest.fixture
def adobe_corpus():
    """Tiny corpus of filings where one question needs evidence from two
    fiscal years."""
    return Corpus(
        [
            make_doc(
                "ADBE_2015_10K",
                [
                    (1, "Adobe Systems Incorporated annual report fiscal 2015 form 10-K"),
                    (59, "Operating income increased year over year 903,095 412,685 422,723 FY2015 Adobe income statement"),
                ],
            ),
            make_doc(
                "ADBE_2016_10K",
                [
                    (1, "Adobe Systems Incorporated annual report fiscal 2016 form 10-K"),
                    (61, "Operating income 1,493,602 903,095 FY2016 Adobe income statement"),
                ],
            ),
            make_doc(
                "MSFT_2016_10K",
                [
                    (1, "Microsoft Corporation annual report fiscal 2016 form 10-K"),
                    (30, "Revenue and cloud gross margin details for Microsoft fiscal 2016"),
                ],
            ),
        ]
    )


@pytest.fixture
def adobe_index(adobe_corpus, tmp_path):
    embedder = HashEmbedder(dim=64)
    return build_index(
        adobe_corpus, DeterministicChat(), embedder, str(tmp_path / "index")
    )


def make_backends(chat_small=None, chat_generator=None, judge=None, dim=64):
    return Backends(
        embedder=HashEmbedder(dim=dim),
        doc_reranker=OverlapReranker(),
        passage_reranker=OverlapReranker(),
        chat_small=chat_small or DeterministicChat(),
        chat_generator=chat_generator or DeterministicChat(),
        judge=judge,
    )
