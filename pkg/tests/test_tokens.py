import string

from hypothesis import given, strategies as st

from gridcodex.tokens import count_tokens, tokenize


def test_empty_string():
    assert count_tokens("") == 0


def test_three_short_words():
    assert count_tokens("grid code compliance") == 3


def test_long_word_charged_per_block():
    assert count_tokens("a" * 24) == 3


def test_cjk_per_character():
    assert tokenize("故障穿越") == ["故", "障", "穿", "越"]
    assert count_tokens("故障穿越") == 4


def test_punctuation_ignored():
    assert count_tokens("a, b; c.") == 3


text_strategy = st.text(
    alphabet=string.ascii_letters + string.digits + " .,;!?\n\t" + "故障穿越電網",
    max_size=200,
)


@given(a=text_strategy, b=text_strategy)
def test_monotone_under_concatenation(a, b):
    combined = count_tokens(a + b)
    assert combined >= max(count_tokens(a), count_tokens(b))


@given(t=text_strategy)
def test_deterministic(t):
    assert count_tokens(t) == count_tokens(t)
