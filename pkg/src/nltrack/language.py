"""Query encoding and region/query similarity scoring."""
from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn

from .errors import EmptyQueryError, ShapeMismatchError
from .geometry import Box, iou

EMBED_DIM = 300
EPS = 1e-7

_PUNCT = str.maketrans({c: " " for c in string.punctuation})


@dataclass(frozen=True)
class Query:
    raw: str
    tokens: tuple[str, ...]


def tokenize(raw: str) -> Query:
    tokens = tuple(raw.lower().translate(_PUNCT).split())
    if not tokens:
        raise EmptyQueryError(f"empty query: {raw!r}")
    return Query(raw, tokens)


class EmbeddingTable(nn.Module):
    """Word vectors with a total lookup; index 0 is the shared unknown-word vector."""

    def __init__(self, vocabulary: Sequence[str], dim: int = EMBED_DIM, vectors=None):
        super().__init__()
        self.words = list(vocabulary)
        self.index = {w: i + 1 for i, w in enumerate(self.words)}
        self.dim = dim
        self.weight = nn.Parameter(torch.empty(len(self.words) + 1, dim))
        nn.init.normal_(self.weight, std=0.1)
        if vectors is not None:
            with torch.no_grad():
                self.weight[1:] = torch.as_tensor(vectors, dtype=self.weight.dtype)

    @property
    def unknown_vector(self) -> torch.Tensor:
        return self.weight[0]

    def ids(self, tokens: Sequence[str]) -> torch.Tensor:
        return torch.tensor([self.index.get(t, 0) for t in tokens], dtype=torch.long)

    def forward(self, tokens: Sequence[str]) -> torch.Tensor:
        return self.weight[self.ids(tokens)]

    @classmethod
    def from_text_file(cls, path, dim: int = EMBED_DIM) -> "EmbeddingTable":
        """Load a GloVe-style file: one ``word v1 ... v_dim`` line per word."""
        words, rows = [], []
        with open(Path(path), encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                fields = line.rstrip("\n").split()
                if not fields:
                    continue
                if len(fields) != dim + 1:
                    raise ValueError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(fields)}")
                words.append(fields[0])
                rows.append([float(v) for v in fields[1:]])
        return cls(words, dim, vectors=rows)


class SentenceEncoder(nn.Module):
    """Single-layer LSTM over word vectors; the final hidden state is the sentence embedding."""

    def __init__(self, dim: int = EMBED_DIM):
        super().__init__()
        self.lstm = nn.LSTM(dim, dim, batch_first=True)

    def forward(self, word_vectors: torch.Tensor) -> torch.Tensor:
        _, (h, _) = self.lstm(word_vectors[None])
        return h[0, 0]


class SimilarityHead(nn.Module):
    """sigmoid(w . (P rf * s) + b), clamped away from 0 and 1."""

    def __init__(self, region_dim: int, dim: int = EMBED_DIM):
        super().__init__()
        self.region_dim = region_dim
        self.project = nn.Linear(region_dim, dim)
        self.score = nn.Linear(dim, 1)

    def forward(self, sentence: torch.Tensor, regions: torch.Tensor) -> torch.Tensor:
        flat = regions.reshape(regions.shape[0], -1)
        if flat.shape[1] != self.region_dim:
            raise ShapeMismatchError(f"region feature has {flat.shape[1]} values, expected {self.region_dim}")
        z = self.project(flat) * sentence[None, :]
        return torch.sigmoid(self.score(z)[:, 0]).clamp(EPS, 1 - EPS)


class LanguageNetwork(nn.Module):
    def __init__(self, vocabulary: Sequence[str], region_dim: int, dim: int = EMBED_DIM):
        super().__init__()
        self.table = EmbeddingTable(vocabulary, dim)
        self.encoder = SentenceEncoder(dim)
        self.head = SimilarityHead(region_dim, dim)


def embed_query(q: Query, table: EmbeddingTable, encoder: SentenceEncoder) -> torch.Tensor:
    return encoder(table(q.tokens))


def similarity(sentence: torch.Tensor, regions: torch.Tensor, head: SimilarityHead) -> torch.Tensor:
    """Similarity of each region feature (leading axis) to the sentence embedding."""
    return head(sentence, regions)


def target_similarity(proposals: Sequence[Box], gt: Box) -> list[float]:
    return [iou(p, gt) for p in proposals]


def language_loss(S: torch.Tensor, S_hat: torch.Tensor) -> torch.Tensor:
    """Summed binary cross-entropy between predicted and IoU-target similarities."""
    S = torch.as_tensor(S)
    S_hat = torch.as_tensor(S_hat, dtype=S.dtype)
    if S.shape != S_hat.shape:
        raise ShapeMismatchError(f"similarities {tuple(S.shape)} vs targets {tuple(S_hat.shape)}")
    S = S.clamp(EPS, 1 - EPS)
    return -(S_hat * torch.log(S) + (1 - S_hat) * torch.log(1 - S)).sum()
