import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multidial.features import (
    PROV_ABSENT,
    PROV_SYSTEM,
    PROV_USER,
    LexiconError,
    SlotLexicon,
    SynonymMap,
    TextPipeline,
    Vocabulary,
    delexicalize,
    synonymize,
    tokenize,
    vectorize,
)


class TestTokenize:
    def test_greeting(self):
        assert tokenize("Welcome to MultiDS!") == ["welcome", "to", "multids"]

    def test_empty(self):
        assert tokenize("") == []

    def test_whitespace_split(self):
        assert tokenize("I am looking for a hotel") == ["i", "am", "looking", "for", "a", "hotel"]

    def test_punctuation_and_case(self):
        assert tokenize("Did you say, in Edinburgh?") == ["did", "you", "say", "in", "edinburgh"]

    def test_keeps_slot_and_info_tokens(self):
        assert tokenize("$h_city _hotels 2nd") == ["$h_city", "_hotels", "2nd"]


def hotel_lexicon():
    return SlotLexicon(
        {
            "h_city": {"edinburgh", "london"},
            "h_nights": {"2", "3"},
            "h_day": {"2nd"},
            "h_month": {"january"},
        }
    )


def restaurant_lexicon():
    return SlotLexicon({"r_price": {"cheap"}, "r_food": {"japanese"}, "r_area": {"centre"}})


class TestDelexicalize:
    def test_hotel_sentence(self):
        toks = ["hotel", "in", "edinburgh", "for", "2", "nights"]
        assert delexicalize(toks, hotel_lexicon()) == [
            "hotel", "in", "$h_city", "for", "$h_nights", "nights",
        ]

    def test_no_hits_unchanged(self):
        toks = ["how", "can", "i", "help", "you"]
        assert delexicalize(toks, hotel_lexicon()) == toks

    def test_restaurant_sentence(self):
        assert delexicalize(["cheap", "japanese", "food"], restaurant_lexicon()) == [
            "$r_price", "$r_food", "food",
        ]

    def test_idempotent(self):
        lex = hotel_lexicon()
        once = delexicalize(["in", "london", "2", "nights"], lex)
        assert delexicalize(once, lex) == once

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(
        ["edinburgh", "london", "2", "3", "hotel", "in", "for", "nights", "$h_city"]
    ), max_size=8))
    def test_idempotence_property(self, toks):
        lex = hotel_lexicon()
        assert delexicalize(delexicalize(toks, lex), lex) == delexicalize(toks, lex)

    def test_output_never_contains_lexicon_values(self):
        lex = hotel_lexicon()
        out = delexicalize(["edinburgh", "london", "2", "2nd", "january"], lex)
        assert not set(out) & lex.values()

    def test_ambiguous_value_rejected(self):
        with pytest.raises(LexiconError):
            SlotLexicon({"h_city": {"york"}, "h_day": {"york"}})

    def test_merge_keeps_ambiguity_rule(self):
        a = SlotLexicon({"h_city": {"york"}})
        b = SlotLexicon({"r_area": {"york"}})
        with pytest.raises(LexiconError):
            SlotLexicon.merge([a, b])


class TestSynonymize:
    def setup_method(self):
        self.vocab = Vocabulary(["want", "food", "cheap"])
        self.syn = SynonymMap({"fancy": "want", "cuisine": "food"})

    def test_fancy_triggers_want(self):
        assert synonymize(["fancy"], self.syn, self.vocab) == ["want"]

    def test_cuisine_triggers_food(self):
        assert synonymize(["cuisine"], self.syn, self.vocab) == ["food"]

    def test_known_word_passes(self):
        assert synonymize(["food"], self.syn, self.vocab) == ["food"]

    def test_unmapped_oov_dropped(self):
        assert synonymize(["zebra", "cheap"], self.syn, self.vocab) == ["cheap"]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(["want", "food", "cheap", "fancy", "cuisine", "zzz"]), max_size=8))
    def test_never_introduces_oov(self, toks):
        out = synonymize(toks, self.syn, self.vocab)
        assert all(t in self.vocab for t in out)

    def test_images_must_be_known(self):
        with pytest.raises(LexiconError):
            SynonymMap({"fancy": "desire"}).check_images(self.vocab)


class TestVectorize:
    def test_user_placement(self):
        vocab = Vocabulary(["want", "food", "cheap"])
        sv = vectorize([], [("want", 0.8), ("cheap", 0.8)], vocab)
        assert np.allclose(sv.values, [0.8, 0.0, 0.8])
        assert sv.provenance[0] == PROV_USER
        assert sv.provenance[1] == PROV_ABSENT

    def test_user_overrides_system(self):
        vocab = Vocabulary(["want", "food"])
        sv = vectorize(["want"], [("want", 0.6)], vocab)
        assert sv.values[0] == 0.6
        assert sv.provenance[0] == PROV_USER

    def test_zero_vector_for_no_tokens(self):
        vocab = Vocabulary(["a", "b", "c"])
        sv = vectorize([], [], vocab)
        assert np.array_equal(sv.values, np.zeros(3))

    def test_system_bits(self):
        vocab = Vocabulary(["how", "can", "i"])
        sv = vectorize(["how", "i"], [], vocab)
        assert np.array_equal(sv.values, [1.0, 0.0, 1.0])
        assert sv.provenance[0] == PROV_SYSTEM

    def test_oov_tokens_ignored(self):
        vocab = Vocabulary(["a"])
        sv = vectorize(["zzz"], [("qqq", 0.5)], vocab)
        assert np.array_equal(sv.values, [0.0])

    def test_confidence_out_of_range_rejected(self):
        vocab = Vocabulary(["a"])
        with pytest.raises(LexiconError):
            vectorize([], [("a", 1.5)], vocab)

    @settings(max_examples=50, deadline=None)
    @given(
        sys_toks=st.lists(st.sampled_from(["a", "b", "c", "x"]), max_size=6),
        usr=st.lists(
            st.tuples(st.sampled_from(["a", "b", "c", "y"]), st.floats(0.0, 1.0)),
            max_size=6,
        ),
    )
    def test_range_and_length_property(self, sys_toks, usr):
        vocab = Vocabulary(["a", "b", "c"])
        sv = vectorize(sys_toks, usr, vocab)
        assert sv.values.shape == (3,)
        assert np.all(sv.values >= 0.0) and np.all(sv.values <= 1.0)


class TestPipeline:
    def test_compression_shrinks_vocabulary(self):
        corpus = [
            "i want a hotel in edinburgh",
            "i want a hotel in london for 2 nights",
            "cheap japanese food",
        ]
        lex = SlotLexicon.merge([hotel_lexicon(), restaurant_lexicon()])
        raw_tokens = [t for line in corpus for t in tokenize(line)]
        raw_vocab = Vocabulary.from_corpus_tokens(raw_tokens)
        compressed_pipe = TextPipeline(lex, SynonymMap({}), None, compressed=True)
        comp_tokens = [t for line in corpus for t in compressed_pipe.process(tokenize(line))]
        comp_vocab = Vocabulary.from_corpus_tokens(comp_tokens)
        assert len(comp_vocab) <= len(raw_vocab)

    def test_value_synonym_folds_into_slot_token(self):
        lex = restaurant_lexicon()
        vocab = Vocabulary(["$r_price", "want", "food"])
        pipe = TextPipeline(lex, SynonymMap({"inexpensive": "cheap"}), vocab, compressed=True)
        assert pipe.process(["inexpensive", "food"]) == ["$r_price", "food"]

    def test_raw_mode_is_identity(self):
        lex = restaurant_lexicon()
        pipe = TextPipeline(lex, SynonymMap({"fancy": "want"}), None, compressed=False)
        assert pipe.process(["fancy", "cheap", "zzz"]) == ["fancy", "cheap", "zzz"]
