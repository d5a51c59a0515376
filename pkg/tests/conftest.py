from __future__ import annotations

import json

import pytest

from morpho_nlg.context import DAConfig
from morpho_nlg.morphology import FormLexicon

NOUN_FS = "NNFS{case}-----A----"
NOUN_IS1 = "NNIS1-----A----"
ADJ_FS1 = "AAFS1----1A----"
ADJ_FS4 = "AAFS4----1A----"
ADJ_NS1 = "AANS1----1A----"

LEXICON_ROWS = [
    ("name", "Ananta", "Ananta", "Ananta", NOUN_FS.format(case=1)),
    ("name", "Ananta", "Ananty", "Ananta", NOUN_FS.format(case=2)),
    ("name", "Ananta", "Anantě", "Ananta", NOUN_FS.format(case=3)),
    ("name", "Ananta", "Anantu", "Ananta", NOUN_FS.format(case=4)),
    ("name", "Ananta", "Anantě", "Ananta", NOUN_FS.format(case=6)),
    ("name", "Ananta", "Anantou", "Ananta", NOUN_FS.format(case=7)),
    ("name", "Café Savoy", "Café Savoy", "Café Savoy", NOUN_IS1),
    ("name", "Green Spirit", "Green Spirit", "Green Spirit", NOUN_IS1),
    ("price_range", "expensive", "drahá", "drahý", ADJ_FS1),
    ("price_range", "expensive", "drahé", "drahý", ADJ_NS1),
    ("food", "Turkish", "turecká", "turecký", ADJ_FS1),
    ("food", "Turkish", "tureckou", "turecký", ADJ_FS4),
]

# DA, text, lemmas, tags
TOY_RECORDS = [
    (
        "inform(name=Ananta,price_range=expensive)",
        "Ananta je drahá restaurace .",
        "Ananta být drahý restaurace .",
        [NOUN_FS.format(case=1), "VB-S---3P-AA---", ADJ_FS1, NOUN_FS.format(case=1), "Z:-------------"],
    ),
    (
        "inform(name=Ananta,food=Turkish)",
        "V Anantě vaří tureckou kuchyni .",
        "v Ananta vařit turecký kuchyně .",
        ["RR--6----------", NOUN_FS.format(case=6), "VB-S---3P-AA---", ADJ_FS4, "NNFS4-----A----",
         "Z:-------------"],
    ),
    (
        'inform(name="Café Savoy",price_range=expensive)',
        "Café Savoy je drahé bistro .",
        "Café Savoy být drahý bistro .",
        [NOUN_IS1, NOUN_IS1, "VB-S---3P-AA---", ADJ_NS1, "NNNS1-----A----", "Z:-------------"],
    ),
    (
        'inform(name="Green Spirit",food=Turkish)',
        "Green Spirit nabízí tureckou kuchyni .",
        "Green Spirit nabízet turecký kuchyně .",
        [NOUN_IS1, NOUN_IS1, "VB-S---3P-AA---", ADJ_FS4, "NNFS4-----A----", "Z:-------------"],
    ),
    (
        "goodbye()",
        "Na shledanou .",
        "na shledanou .",
        ["RR--4----------", "Db-------------", "Z:-------------"],
    ),
]


def build_lexicon(rows=LEXICON_ROWS):
    lex = FormLexicon()
    for slot, value, form, lemma, tag in rows:
        lex.add(slot, value, form, lemma, tag)
    return lex.freeze()


def write_lexicon(path, rows=LEXICON_ROWS):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# slot\tvalue\tform\tlemma\ttag\n")
        for row in rows:
            f.write("\t".join(row) + "\n")
    return path


def toy_record(da, text, lemmas=None, tags=None):
    record = {"da": da, "text": text}
    if lemmas is not None:
        record["lemmas"] = lemmas
    if tags is not None:
        record["tags"] = tags
    return record


def write_records(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def da_config():
    return DAConfig.default()


@pytest.fixture
def lexicon():
    return build_lexicon()


@pytest.fixture
def lexicon_file(tmp_path):
    return write_lexicon(tmp_path / "lexicon.tsv")


@pytest.fixture
def toy_records():
    return [toy_record(*row) for row in TOY_RECORDS]


@pytest.fixture
def dataset_file(tmp_path, toy_records):
    return write_records(tmp_path / "dataset.jsonl", toy_records)
