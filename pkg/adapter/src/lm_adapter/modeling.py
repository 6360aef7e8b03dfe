"""Model and tokenizer backends.

Two in-package toy causal models make the adapter testable without model
downloads: TinyCausalLM (cumulative-context MLP with a tanh nonlinearity) and
LinearBagLM (purely linear, analytically attributable). Hugging Face causal
models are wrapped behind the same minimal interface when transformers is
available and a local/checkpoint path or model id is given.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import torch
from torch import nn


class WordTokenizer:
    """Whitespace-piece tokenizer with a fixed vocabulary; one id per piece.
    The newline separator is its own token."""

    NEWLINE = "\n"
    UNK = "<unk>"

    def __init__(self, pieces: Sequence[str]):
        vocab = [self.NEWLINE, self.UNK]
        seen = set(vocab)
        for p in pieces:
            if p not in seen:
                seen.add(p)
                vocab.append(p)
        self.id2piece = vocab
        self.piece2id = {p: i for i, p in enumerate(vocab)}

    @classmethod
    def from_texts(cls, texts: Sequence[str], extra: Sequence[str] = ("A:", "B:")) -> "WordTokenizer":
        pieces = sorted({w for t in texts for w in t.split()})
        return cls(list(extra) + pieces)

    @property
    def newline_id(self) -> int:
        return self.piece2id[self.NEWLINE]

    @property
    def vocab_size(self) -> int:
        return len(self.id2piece)

    def encode_piece(self, piece: str) -> list[int]:
        return [self.piece2id.get(piece, self.piece2id[self.UNK])]

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(
            self.id2piece[i] for i in ids if self.id2piece[i] != self.NEWLINE
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.id2piece), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


class TinyCausalLM(nn.Module):
    """Causal toy model: position t sees the running mean of embeddings up to
    t, passed through a one-hidden-layer tanh MLP to vocabulary logits."""

    def __init__(self, vocab_size: int, d_model: int = 16, d_hidden: int = 32,
                 seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.embedding = nn.Embedding(vocab_size, d_model)
        self.hidden = nn.Linear(d_model, d_hidden)
        self.activation = nn.Tanh()
        self.head = nn.Linear(d_hidden, vocab_size)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        return self.embedding(ids)

    def forward_from_embeddings(self, embeds: torch.Tensor) -> torch.Tensor:
        # embeds: (batch, T, d) -> logits (batch, T, vocab)
        steps = torch.arange(1, embeds.shape[1] + 1, device=embeds.device)
        context = embeds.cumsum(dim=1) / steps.view(1, -1, 1)
        return self.head(self.activation(self.hidden(context)))

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.forward_from_embeddings(self.embed(ids))


class LinearBagLM(nn.Module):
    """Purely linear causal model: logits at position t are a linear map of
    the cumulative sum of input embeddings. Attribution of input i to the
    logit of token v at any later position is exactly emb_i @ W_v."""

    def __init__(self, vocab_size: int, d_model: int = 8, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.embedding = nn.Embedding(vocab_size, d_model)
        self.head = nn.Linear(d_model, vocab_size, bias=False)

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        return self.embedding(ids)

    def forward_from_embeddings(self, embeds: torch.Tensor) -> torch.Tensor:
        return self.head(embeds.cumsum(dim=1))

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.forward_from_embeddings(self.embed(ids))


class HFCausalLM(nn.Module):
    """Thin wrapper exposing a Hugging Face causal LM through the adapter's
    embedding-level interface. Requires the transformers package."""

    def __init__(self, model_id_or_path: str, checkpoint: str | None = None):
        super().__init__()
        from transformers import AutoModelForCausalLM, AutoTokenizer

        source = checkpoint or model_id_or_path
        self.model = AutoModelForCausalLM.from_pretrained(source)
        self.model.eval()
        self.hf_tokenizer = AutoTokenizer.from_pretrained(model_id_or_path)

    @property
    def newline_id(self) -> int:
        ids = self.hf_tokenizer.encode("\n", add_special_tokens=False)
        return ids[0]

    def encode_piece(self, piece: str) -> list[int]:
        # pieces after the first are prefixed with a space so BPE boundaries
        # match normal running text
        text = piece if piece == "\n" else " " + piece
        return self.hf_tokenizer.encode(text, add_special_tokens=False)

    def decode(self, ids: Sequence[int]) -> str:
        return self.hf_tokenizer.decode(list(ids)).strip()

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        return self.model.get_input_embeddings()(ids)

    def forward_from_embeddings(self, embeds: torch.Tensor) -> torch.Tensor:
        return self.model(inputs_embeds=embeds).logits

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.model(input_ids=ids).logits


def token_strings(tokenizer, ids: Sequence[int]) -> list[str]:
    """Per-token surface strings for the attribution exchange format."""
    if isinstance(tokenizer, WordTokenizer):
        return [tokenizer.id2piece[i] for i in ids]
    return [tokenizer.hf_tokenizer.decode([i]) for i in ids]
