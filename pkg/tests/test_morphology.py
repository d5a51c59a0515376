from __future__ import annotations

import pytest

from morpho_nlg.exceptions import CorpusFormatError, MisalignedRowError, TagAlphabetError, TagLengthError
from morpho_nlg.morphology import (
    ANY_TAG,
    FormLexicon,
    MatchLevel,
    MorphTag,
    filter_forms,
    forms_for,
    generate_form,
    ingest_dictionary,
    is_tag,
    lexicon_rows,
    load_dictionary,
    load_lexicon,
    parse_tag,
    save_dictionary,
    save_lexicon,
    tag_match,
)


def test_parse_tag_categories():
    tag = parse_tag("NNFS2-----A----")
    assert (tag.pos, tag.subpos, tag.gender, tag.number, tag.case) == ("N", "N", "F", "S", "2")
    assert str(tag) == "NNFS2-----A----"


def test_parse_tag_errors():
    with pytest.raises(TagLengthError) as excinfo:
        parse_tag("NNFS2")
    assert excinfo.value.expected == 15
    with pytest.raises(TagAlphabetError) as excinfo:
        parse_tag("NNFS2 ----A----")
    assert excinfo.value.position == 6


def test_is_tag():
    assert is_tag("AAFS1----1A----")
    assert not is_tag("restaurace")
    assert not is_tag("X-name")


def test_tag_match_levels():
    genitive = MorphTag.pattern(case="2")
    noun = parse_tag("NNFS2-----A----")
    adj = parse_tag("AAFS1----1A----")
    assert tag_match(noun, genitive)
    assert not tag_match(adj, genitive)
    assert tag_match(adj, MorphTag.pattern(pos="A", case="4"), MatchLevel.COARSE_POS)
    assert tag_match(noun, MorphTag.pattern(pos="A"), MatchLevel.ANY)
    assert tag_match(noun, ANY_TAG)


def test_lexicon_forms_in_order(lexicon):
    forms = lexicon.forms("name", "Ananta")
    assert [sf.form for sf in forms] == ["Ananta", "Ananty", "Anantě", "Anantu", "Anantě", "Anantou"]
    assert lexicon.forms("name", "Nowhere") == []
    assert forms_for(lexicon, "name", "Ananta") == forms
    assert ("food", "Turkish") in lexicon
    assert len(lexicon) == 5
    assert lexicon.values_for_slot("name") == ["Ananta", "Café Savoy", "Green Spirit"]


def test_lexicon_merges_duplicate_rows():
    lex = FormLexicon()
    lex.add("name", "Ananta", "Ananta", "Ananta", "NNFS1-----A----", 2)
    lex.add("name", "Ananta", "Ananta", "Ananta", "NNFS1-----A----", 3)
    assert [sf.frequency for sf in lex.forms("name", "Ananta")] == [5]


def test_frozen_lexicon_rejects_additions(lexicon):
    with pytest.raises(RuntimeError):
        lexicon.add("name", "Ananta", "Ananto", "Ananta", "NNFS5-----A----")


def test_filter_forms_backoff(lexicon):
    forms = lexicon.forms("name", "Ananta")
    assert [sf.form for sf in filter_forms(forms, MorphTag.pattern(case="7"))] == ["Anantou"]
    # no feminine noun in case 5: back off to the coarse part of speech
    assert len(filter_forms(forms, MorphTag.pattern(pos="N", case="5"))) == 6
    # nothing matches the part of speech either: every form
    assert len(filter_forms(forms, MorphTag.pattern(pos="V", case="5"))) == 6


def test_multiword_form_tokens(lexicon):
    (sf,) = lexicon.forms("name", "Café Savoy")
    assert sf.tokens == ["Café", "Savoy"]


def test_with_frequencies(lexicon):
    counted = lexicon.with_frequencies({("price_range", "expensive", "drahé"): 4})
    assert [sf.frequency for sf in counted.forms("price_range", "expensive")] == [0, 4]
    assert [sf.frequency for sf in lexicon.forms("price_range", "expensive")] == [0, 0]


def test_dictionary_generation():
    dictionary = ingest_dictionary(
        [
            ("restaurace", "restaurace", "NNFS1-----A----"),
            ("restaurace", "restaurace", "NNFS2-----A----"),
            ("restauraci", "restaurace", "NNFS4-----A----", 3),
            ("restaurací", "restaurace", "NNFS7-----A----"),
        ]
    )
    assert generate_form(dictionary, "restaurace", MorphTag.pattern(case="4")) == ["restauraci"]
    assert generate_form(dictionary, "restaurace", parse_tag("NNFS7-----A----")) == ["restaurací"]
    # backoff to the part of speech: the most frequent form first
    assert generate_form(dictionary, "restaurace", MorphTag.pattern(pos="N", case="5"))[0] == "restauraci"
    assert generate_form(dictionary, "Ananta", MorphTag.pattern(case="2")) == ["Ananta"]
    assert len(dictionary) == 1
    assert dictionary.distinct_forms == 3


def test_dictionary_rejects_bad_rows():
    with pytest.raises(MisalignedRowError) as excinfo:
        ingest_dictionary([("restaurace", "restaurace", "NNFS1-----A----"), ("restaurace", "restaurace")])
    assert excinfo.value.line_number == 2
    with pytest.raises(MisalignedRowError):
        ingest_dictionary([("restaurace", "restaurace", "NNFS1")])


def test_lexicon_file_round_trip(tmp_path, lexicon):
    path = tmp_path / "lexicon.tsv"
    save_lexicon(lexicon.with_frequencies({("name", "Ananta", "Anantou"): 2}), path)
    loaded = load_lexicon(path)
    assert loaded.keys() == lexicon.keys()
    assert loaded.forms("name", "Ananta")[-1].frequency == 2
    assert loaded.forms("name", "Café Savoy")[0].tag == parse_tag("NNIS1-----A----")


def test_lexicon_file_errors(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("name\tAnanta\tAnanta\tAnanta\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError) as excinfo:
        load_lexicon(path)
    assert excinfo.value.line == 1
    path.write_text("# header\nname\tAnanta\tAnanta\tAnanta\tNNFS1\n", encoding="utf-8")
    with pytest.raises(CorpusFormatError) as excinfo:
        load_lexicon(path)
    assert excinfo.value.line == 2


def test_dictionary_file_round_trip(tmp_path, lexicon):
    dictionary = ingest_dictionary(lexicon_rows(lexicon))
    path = tmp_path / "dictionary.tsv"
    save_dictionary(dictionary, path)
    loaded = load_dictionary(path)
    assert sorted(loaded.lemmas()) == sorted(dictionary.lemmas())
    assert generate_form(loaded, "Ananta", MorphTag.pattern(case="7")) == ["Anantou"]
    assert generate_form(loaded, "drahý", MorphTag.pattern(gender="N")) == ["drahé"]
