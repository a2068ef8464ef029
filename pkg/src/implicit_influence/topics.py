"""From timestamped tweets to contagion-labelled infection events.

Pipeline: tokenize and filter, tf-idf weighting, NMF topics, hard topic
assignment, daily aggregation into an infection log and volume series.
"""

import csv
import re
from dataclasses import dataclass
from datetime import datetime

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from .data import InfectionLog, VolumeSeries

DEFAULT_STOPWORDS = frozenset(ENGLISH_STOP_WORDS) | {"rt", "amp", "via"}

_URL = re.compile(r"\b[a-z][a-z0-9+.\-]*://\S*")
_MENTION = re.compile(r"@\w+")
_NON_ALNUM = re.compile(r"[^a-z0-9]+")

TIMESTAMP_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d",
                     "%m/%d/%Y %H:%M", "%m/%d/%Y %H:%M:%S")


@dataclass(frozen=True)
class Document:
    user: str
    timestamp: str
    tokens: tuple


@dataclass(frozen=True)
class Corpus:
    """Filtered documents and their sorted vocabulary.

    ``dropped`` counts input documents left with no vocabulary terms.
    """

    documents: tuple
    vocabulary: tuple
    dropped: int = 0

    @property
    def n_documents(self):
        return len(self.documents)


@dataclass
class TopicModel:
    """``X ~ W H`` with ``W`` documents x topics and ``H`` topics x terms."""

    W: np.ndarray
    H: np.ndarray
    objective_trace: list
    n_iter: int

    @property
    def n_topics(self):
        return self.H.shape[0]


def tokenize(text, stopwords=DEFAULT_STOPWORDS, min_length=2):
    text = text.lower()
    text = _URL.sub(" ", text)
    text = _MENTION.sub(" ", text)
    tokens = _NON_ALNUM.sub(" ", text).split()
    return [t for t in tokens if len(t) >= min_length and t not in stopwords]


def preprocess(raw_documents, stopwords=DEFAULT_STOPWORDS, min_df=3, min_length=2):
    """Tokenize ``(user, timestamp, text)`` records and build the vocabulary.

    Terms found in fewer than ``min_df`` documents are removed; documents
    left empty are dropped and counted in ``Corpus.dropped``.
    """
    tokenized = [(user, ts, tokenize(text, stopwords, min_length))
                 for user, ts, text in raw_documents]
    df = {}
    for _, _, toks in tokenized:
        for term in set(toks):
            df[term] = df.get(term, 0) + 1
    vocab = tuple(sorted(t for t, c in df.items() if c >= min_df))
    keep = set(vocab)
    docs = []
    for user, ts, toks in tokenized:
        toks = tuple(t for t in toks if t in keep)
        if toks:
            docs.append(Document(user, ts, toks))
    if not docs:
        raise ValueError("corpus is empty after filtering")
    return Corpus(tuple(docs), vocab, len(tokenized) - len(docs))


def term_counts(corpus):
    """Sparse ``D x V`` raw term counts."""
    index = {t: i for i, t in enumerate(corpus.vocabulary)}
    rows, cols = [], []
    for d, doc in enumerate(corpus.documents):
        for t in doc.tokens:
            rows.append(d)
            cols.append(index[t])
    data = np.ones(len(rows))
    shape = (corpus.n_documents, len(corpus.vocabulary))
    X = sparse.coo_matrix((data, (rows, cols)), shape=shape).tocsr()
    X.sum_duplicates()
    return X


def tfidf(corpus):
    """``X[d, v] = count(d, v) * (1 + ln(D / (1 + df(v))))`` as a CSR matrix."""
    C = term_counts(corpus)
    n_docs = C.shape[0]
    df = np.bincount(C.indices, minlength=C.shape[1])
    idf = 1.0 + np.log(n_docs / (1.0 + df))
    return (C @ sparse.diags(idf)).tocsr()


def _nmf_objective(X, W, H, X_sq):
    if sparse.issparse(X):
        cross = float(np.sum(W * (X @ H.T)))
        quad = float(np.sum((W.T @ W) * (H @ H.T)))
        return max(X_sq - 2.0 * cross + quad, 0.0)
    return float(np.sum((X - W @ H) ** 2))


def nmf(X, n_topics, max_iter=500, tol=1e-6, random_state=0, eps=1e-12):
    """Frobenius NMF by multiplicative updates (``H`` first, then ``W``).

    Factors start i.i.d. uniform on (0, 1]. Stops when the relative decrease
    of ``||X - W H||_F^2`` over one sweep falls below ``tol``.
    """
    if not sparse.issparse(X):
        X = np.asarray(X, dtype=np.float64)
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if np.any(X < 0):
            raise ValueError("X must be nonnegative")
    else:
        X = X.tocsr().astype(np.float64)
        if not np.all(np.isfinite(X.data)) or np.any(X.data < 0):
            raise ValueError("X must be finite and nonnegative")
    n_docs, n_terms = X.shape
    if not 1 <= n_topics <= min(n_docs, n_terms):
        raise ValueError(f"n_topics={n_topics} must be in 1..{min(n_docs, n_terms)}")
    rng = np.random.default_rng(random_state)
    W = 1.0 - rng.random((n_docs, n_topics))
    H = 1.0 - rng.random((n_topics, n_terms))
    X_sq = float(X.multiply(X).sum()) if sparse.issparse(X) else float(np.sum(X * X))

    trace = [_nmf_objective(X, W, H, X_sq)]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        H *= np.asarray(W.T @ X) / (W.T @ W @ H + eps)
        W *= np.asarray(X @ H.T) / (W @ (H @ H.T) + eps)
        obj = _nmf_objective(X, W, H, X_sq)
        prev = trace[-1]
        trace.append(obj)
        if obj == 0 or (prev - obj) / prev < tol:
            break
    return TopicModel(W, H, trace, n_iter)


def top_words(model, vocabulary, n=10):
    """The ``n`` heaviest terms of every topic; ties keep vocabulary order."""
    if n > len(vocabulary):
        raise ValueError("n exceeds the vocabulary size")
    order = np.argsort(-model.H, axis=1, kind="stable")[:, :n]
    return [[vocabulary[i] for i in row] for row in order]


def parse_timestamp(text):
    for fmt in TIMESTAMP_FORMATS:
        try:
            return datetime.strptime(text.strip(), fmt)
        except ValueError:
            continue
    raise ValueError(f"unparseable timestamp {text!r}")


@dataclass(frozen=True)
class TopicLog:
    log: InfectionLog
    volumes: VolumeSeries
    users: tuple
    topics: np.ndarray
    start: str


def assign_topics(W):
    """Dominant topic per document (0-based), lowest index on ties."""
    return np.argmax(np.asarray(W), axis=1)


def build_log(corpus, model):
    """Daily infection log and tweet-volume series from topic assignments.

    Users become nodes in sorted-name order. User ``u`` is infected by topic
    ``k`` on day ``d`` if they posted at least one document assigned to
    ``k`` that day; days count from the earliest timestamp. Volume row ``d+1``
    (1-based) holds the number of documents of day ``d``, so the horizon
    equals the number of days spanned.
    """
    if model.W.shape[0] != corpus.n_documents:
        raise ValueError("topic model is not aligned with the corpus")
    days = []
    for i, doc in enumerate(corpus.documents):
        try:
            days.append(parse_timestamp(doc.timestamp).date())
        except ValueError as exc:
            raise ValueError(f"document {i}: {exc}") from None
    start = min(days)
    day_index = np.array([(d - start).days for d in days])
    topics = assign_topics(model.W)
    users = tuple(sorted({doc.user for doc in corpus.documents}))
    node = {u: i + 1 for i, u in enumerate(users)}
    K = model.n_topics
    T = int(day_index.max()) + 1
    events = [(node[doc.user], int(k) + 1, int(d))
              for doc, k, d in zip(corpus.documents, topics, day_index)]
    log = InfectionLog(len(users), K, T, np.array(events, dtype=np.int64))
    V = np.zeros((T, K))
    np.add.at(V, (day_index, topics), 1.0)
    return TopicLog(log, VolumeSeries(V), users, topics, start.isoformat())


def read_tweets(path):
    """Read ``username,timestamp,tweet_text`` rows (header optional).

    A header naming ``username``, ``time`` and ``tweets`` columns, as in the
    widely shared public tweet dumps, is also accepted.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    header = [h.strip().lower() for h in rows[0]]
    cols = (0, 1, 2)
    body = rows
    if {"username", "time", "tweets"} <= set(header):
        cols = (header.index("username"), header.index("time"), header.index("tweets"))
        body = rows[1:]
    elif header[:3] == ["username", "timestamp", "tweet_text"]:
        body = rows[1:]
    out = []
    for lineno, row in enumerate(body, start=len(rows) - len(body) + 1):
        if not row:
            continue
        try:
            out.append(tuple(row[c] for c in cols))
        except IndexError:
            raise ValueError(f"{path}: line {lineno} has too few fields") from None
    return out


class TopicExtractor(BaseEstimator):
    """tf-idf + NMF topic model over raw ``(user, timestamp, text)`` records.

    ``transform`` is only defined for the fitted corpus; it returns the
    document-topic weights ``W``.
    """

    def __init__(self, n_topics=10, max_iter=500, tol=1e-6, min_df=3,
                 stopwords=DEFAULT_STOPWORDS, random_state=0):
        self.n_topics = n_topics
        self.max_iter = max_iter
        self.tol = tol
        self.min_df = min_df
        self.stopwords = stopwords
        self.random_state = random_state

    def fit(self, raw_documents, y=None):
        self.corpus_ = preprocess(raw_documents, self.stopwords, self.min_df)
        self.tfidf_ = tfidf(self.corpus_)
        self.model_ = nmf(self.tfidf_, self.n_topics, self.max_iter, self.tol,
                          self.random_state)
        self.components_ = self.model_.H
        self.vocabulary_ = self.corpus_.vocabulary
        return self

    def transform(self, raw_documents=None):
        return self.model_.W

    def fit_transform(self, raw_documents, y=None):
        return self.fit(raw_documents).transform()

    def top_words(self, n=10):
        return top_words(self.model_, self.vocabulary_, n)

    def build_log(self):
        return build_log(self.corpus_, self.model_)
