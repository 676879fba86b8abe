"""Porter stemmer, original published rule set.

Implemented in-repo (no stemming package on the index) so that feature
vocabularies are reproducible bit-for-bit. Input is expected to be a
lowercase token; tokens shorter than three characters are returned
unchanged, matching the reference implementation's guard. Non-letter
characters count as consonants, so tokens like "ie6" pass through intact.
"""

from __future__ import annotations

_VOWELS = "aeiou"


def _is_cons(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        # y is a consonant at the start or after a vowel, a vowel after
        # a consonant ("syzygy" -> CVCVCV).
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem: str) -> int:
    """Number of vowel->consonant transitions ([C](VC)^m[V] form)."""
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        if _is_cons(stem, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(word: str) -> bool:
    return len(word) >= 2 and word[-1] == word[-2] and _is_cons(word, len(word) - 1)


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    if not (_is_cons(word, len(word) - 3) and not _is_cons(word, len(word) - 2) and _is_cons(word, len(word) - 1)):
        return False
    return word[-1] not in "wxy"


# (suffix, replacement) tables for the measure-conditioned steps, ordered
# longest suffix first: within a step the longest matching suffix decides,
# and if its condition fails the step ends with no change.
_STEP2 = [
    ("ational", "ate"), ("ization", "ize"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("tional", "tion"), ("biliti", "ble"), ("ation", "ate"),
    ("alism", "al"), ("aliti", "al"), ("ousli", "ous"), ("entli", "ent"),
    ("iviti", "ive"), ("enci", "ence"), ("anci", "ance"), ("izer", "ize"),
    ("abli", "able"), ("alli", "al"), ("ator", "ate"), ("eli", "e"),
]

_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ness", ""), ("ful", ""),
]

_STEP4 = [
    "ement", "ance", "ence", "able", "ible", "ment", "ion", "ant", "ent",
    "ism", "ate", "iti", "ous", "ive", "ize", "al", "er", "ic", "ou",
]


def _longest_match(word: str, suffixes) -> str | None:
    for suf in suffixes:
        if word.endswith(suf):
            return suf
    return None


def _step1a(word: str) -> str:
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies"):
        return word[:-2]
    if word.endswith("ss"):
        return word
    if word.endswith("s"):
        return word[:-1]
    return word


def _step1b(word: str) -> str:
    if word.endswith("eed"):
        stem = word[:-3]
        return word[:-1] if _measure(stem) > 0 else word
    if word.endswith("ed") and _has_vowel(word[:-2]):
        word = word[:-2]
    elif word.endswith("ing") and _has_vowel(word[:-3]):
        word = word[:-3]
    else:
        return word
    # cleanup after a bare -ed / -ing removal
    if word.endswith(("at", "bl", "iz")):
        return word + "e"
    if _ends_double_cons(word) and word[-1] not in "lsz":
        return word[:-1]
    if _measure(word) == 1 and _ends_cvc(word):
        return word + "e"
    return word


def _step1c(word: str) -> str:
    if word.endswith("y") and _has_vowel(word[:-1]):
        return word[:-1] + "i"
    return word


def _step2(word: str) -> str:
    suf = _longest_match(word, [s for s, _ in _STEP2])
    if suf is None:
        return word
    stem = word[: -len(suf)]
    if _measure(stem) > 0:
        return stem + dict(_STEP2)[suf]
    return word


def _step3(word: str) -> str:
    suf = _longest_match(word, [s for s, _ in _STEP3])
    if suf is None:
        return word
    stem = word[: -len(suf)]
    if _measure(stem) > 0:
        return stem + dict(_STEP3)[suf]
    return word


def _step4(word: str) -> str:
    suf = _longest_match(word, _STEP4)
    if suf is None:
        return word
    stem = word[: -len(suf)]
    if _measure(stem) <= 1:
        return word
    if suf == "ion" and (not stem or stem[-1] not in "st"):
        return word
    return stem


def _step5a(word: str) -> str:
    if not word.endswith("e"):
        return word
    stem = word[:-1]
    m = _measure(stem)
    if m > 1 or (m == 1 and not _ends_cvc(stem)):
        return stem
    return word


def _step5b(word: str) -> str:
    if _measure(word) > 1 and _ends_double_cons(word) and word[-1] == "l":
        return word[:-1]
    return word


def stem(word: str) -> str:
    """Stem one lowercase token."""
    if len(word) <= 2:
        return word
    word = _step1a(word)
    word = _step1b(word)
    word = _step1c(word)
    word = _step2(word)
    word = _step3(word)
    word = _step4(word)
    word = _step5a(word)
    word = _step5b(word)
    return word
