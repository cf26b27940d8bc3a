"""Ordered output symbol table shared by the network, decoder, and data pipeline.

Index 0 is always BLANK. Single-character symbols are acoustic (character)
targets; every longer symbol is a non-acoustic SLU token (entity tag, intent
label, or part-of-speech tag) and occupies one output node of its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BLANK_ID = 0
BLANK_SYMBOL = "<blank>"

DEFAULT_CHARSET = "abcdefghijklmnopqrstuvwxyz0123456789'. "


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    """Immutable symbol table: BLANK, then characters, then appended SLU symbols."""

    symbols: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.symbols or self.symbols[0] != BLANK_SYMBOL:
            raise VocabError(f"symbol 0 must be {BLANK_SYMBOL!r}")
        index = {}
        for i, sym in enumerate(self.symbols):
            if sym in index:
                raise VocabError(f"duplicate symbol {sym!r}")
            index[sym] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def id_of(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise VocabError(f"symbol {symbol!r} not in vocabulary") from None

    def symbol_of(self, symbol_id: int) -> str:
        if not 0 <= symbol_id < len(self.symbols):
            raise VocabError(f"symbol id {symbol_id} out of range [0, {len(self.symbols)})")
        return self.symbols[symbol_id]

    def is_label(self, symbol_id: int) -> bool:
        """True for SLU symbols (entity tags, intents, POS tags); False for BLANK and characters."""
        return symbol_id != BLANK_ID and len(self.symbols[symbol_id]) > 1

    def label_symbols(self) -> tuple[str, ...]:
        return tuple(s for s in self.symbols[1:] if len(s) > 1)

    def char_ids(self, text: str) -> list[int]:
        """Map a character string to acoustic symbol ids; unknown characters are an error."""
        ids = []
        for ch in text:
            if ch not in self._index:
                raise VocabError(f"character {ch!r} not in vocabulary")
            ids.append(self._index[ch])
        return ids

    def extend(self, new_symbols) -> "Vocab":
        """Append symbols after all existing ids; existing indices are unchanged."""
        new_symbols = tuple(new_symbols)
        for sym in new_symbols:
            if sym in self._index:
                raise VocabError(f"symbol {sym!r} already in vocabulary")
        return Vocab(self.symbols + new_symbols)


def char_vocab(charset: str = DEFAULT_CHARSET) -> Vocab:
    """Acoustic-only vocabulary: BLANK plus one symbol per character."""
    return Vocab((BLANK_SYMBOL,) + tuple(charset))


def tag_kind(symbol: str) -> str:
    """Classify a symbol string: blank, char, b-tag, i-tag, intent, pos, or other."""
    if symbol == BLANK_SYMBOL:
        return "blank"
    if len(symbol) == 1:
        return "char"
    if symbol.startswith("B-"):
        return "b-tag"
    if symbol.startswith("I-"):
        return "i-tag"
    if symbol.startswith("INT-"):
        return "intent"
    if symbol.startswith("POS-"):
        return "pos"
    return "other"
