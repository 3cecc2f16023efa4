"""
EN: Ensure project root is on sys.path for imports in tests, plus shared fixtures.
FA: ریشه پروژه را برای ایمپورت‌ها به sys.path اضافه می‌کند و فیکسچرهای مشترک را تعریف می‌کند.
"""

import sys
from pathlib import Path
from typing import Dict, List, Tuple

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.config import PipelineSettings  # noqa: E402
from src.data.corpus_io import write_canonical_corpus  # noqa: E402
from src.data.lexicon_ingest import ConceptLexicon  # noqa: E402
from src.data.schemas import Document, GoldEntity, GoldRelation, RelationType  # noqa: E402
from src.utils.io import write_jsonl  # noqa: E402


def conso_line(cui: str, term: str, lat: str = "ENG", sab: str = "RXNORM", suppress: str = "N") -> str:
    """EN/FA: یک خط MRCONSO با ۱۸ ستون و خط لوله انتهایی."""
    fields = [cui, lat, "P", "L0000001", "PF", "S0000001", "Y", "A0000001", "", "", "", sab, "IN",
              "0001", term, "0", suppress, "256"]
    return "|".join(fields) + "|\n"


def sty_line(cui: str, tui: str, sty: str) -> str:
    return "|".join([cui, tui, "A1.4.1.1.1", sty, "AT0000001", "256"]) + "|\n"


@pytest.fixture
def rrf_files(tmp_path: Path) -> Tuple[Path, Path]:
    """
    EN: Small MRCONSO/MRSTY pair: four drugs, one disease, a French row, a suppressed row and one corrupt row.
    FA: یک جفت کوچک MRCONSO/MRSTY شامل چهار دارو، یک بیماری، یک ردیف فرانسوی، یک ردیف حذف‌شده و یک ردیف خراب.
    """
    conso = tmp_path / "MRCONSO.RRF"
    sty = tmp_path / "MRSTY.RRF"
    conso.write_text(
        "".join(
            [
                conso_line("C0004057", "Aspirin"),
                conso_line("C0004057", "ASA"),
                conso_line("C0004057", "aspirine", lat="FRE"),
                conso_line("C0070166", "Plavix"),
                conso_line("C0070166", "clopidogrel"),
                conso_line("C0008809", "Cipro"),
                conso_line("C0008809", "ciprofloxacin."),
                conso_line("C0025598", "metoprolol tartrate"),
                conso_line("C0025598", "metoprolol"),
                conso_line("C0025598", "metoprolol old name", suppress="O"),
                conso_line("C0020538", "hypertension", sab="SNOMEDCT_US"),
                "C123|ENG|broken\n",
            ]
        ),
        encoding="utf-8",
    )
    sty.write_text(
        "".join(
            [
                sty_line("C0004057", "T109", "Organic Chemical"),
                sty_line("C0004057", "T121", "Pharmacologic Substance"),
                sty_line("C0070166", "T121", "Pharmacologic Substance"),
                sty_line("C0008809", "T195", "Antibiotic"),
                sty_line("C0025598", "T121", "Pharmacologic Substances"),
                sty_line("C0020538", "T047", "Disease or Syndrome"),
            ]
        ),
        encoding="utf-8",
    )
    return conso, sty


@pytest.fixture
def mini_lexicon() -> ConceptLexicon:
    """EN/FA: واژه‌نامه کوچک ساخته‌شده در حافظه برای تست نگاشت مفاهیم."""
    pharm = "Pharmacologic Substance"
    return ConceptLexicon(
        {
            "aspirin": [("C0004057", pharm)],
            "asa": [("C0004057", pharm)],
            "plavix": [("C0070166", pharm)],
            "cipro": [("C0008809", "Antibiotic")],
            "metoprolol": [("C0025598", pharm)],
            "metoprolol tartrate": [("C0025598", pharm)],
            "prednisone": [("C0032952", pharm)],
            "hypertension": [("C0020538", "Disease or Syndrome")],
        },
        {"source": "tests"},
    )


# EN: Discharge note where the baseline answer misses three drugs that the lexicon maps
# FA: یادداشت ترخیص که پاسخ baseline سه دارویی را که واژه‌نامه پیدا می‌کند از دست می‌دهد
NOTE_TEXT = (
    "Discharge medications: aspirin 81 mg daily, atorvastatin 20 mg nightly, amiodarone 200 mg daily, "
    "metoprolol tartrate 50 mg twice a day, spironolactone 25 mg daily, acetaminophen 325 mg as needed, "
    "ranitidine HCl 150 mg twice a day, prednisone 60 mg daily for hypertension flare. "
    "Continue Plavix 75 mg daily. ASA 325 given in the ED. Cipro 250 mg for 3 days."
)

BASELINE_PAIRS: List[Tuple[str, str]] = [
    ("aspirin", "81 mg"),
    ("atorvastatin", "20 mg"),
    ("amiodarone", "200 mg"),
    ("metoprolol tartrate", "50 mg"),
    ("spironolactone", "25 mg"),
    ("acetaminophen", "325 mg"),
    ("ranitidine HCl", "150 mg"),
    ("prednisone", "60 mg"),
]
UMLS_EXTRA_PAIRS: List[Tuple[str, str]] = [("Plavix", "75 mg"), ("ASA", "325"), ("Cipro", "250 mg")]
UMLS_MARKER = "Medications identified in the note using the UMLS Metathesaurus"


def _entity(text: str, entity_id: str, label: str, surface: str, anchor: str) -> GoldEntity:
    start = text.index(anchor) + anchor.index(surface)
    return GoldEntity(entity_id=entity_id, label=label, start=start, end=start + len(surface), surface=surface)


def strength_gold(doc_id: str = "note-001", text: str = NOTE_TEXT) -> List[GoldRelation]:
    """
    EN: Eleven gold Strength-Drug relations of the discharge note (head = strength, tail = drug).
    FA: یازده رابطه مرجع Strength-Drug یادداشت ترخیص (سر = مقدار، دم = دارو).
    """
    relations = []
    for i, (drug, strength) in enumerate(BASELINE_PAIRS + UMLS_EXTRA_PAIRS, start=1):
        anchor = f"{drug} {strength}"
        relations.append(
            GoldRelation(
                doc_id=doc_id,
                rtype=RelationType.STRENGTH_DRUG,
                head=_entity(text, f"T{2 * i}", "Strength", strength, anchor),
                tail=_entity(text, f"T{2 * i - 1}", "Drug", drug, anchor),
            )
        )
    return relations


def format_answer(pairs: List[Tuple[str, str]]) -> str:
    return "[" + ", ".join(f"('{d}', '{s}')" for d, s in pairs) + "]"


@pytest.fixture
def note_corpus(tmp_path: Path) -> Path:
    """EN/FA: پیکره استاندارد JSONL با یک یادداشت و روابط مرجع آن."""
    path = tmp_path / "corpus.jsonl"
    doc = Document(doc_id="note-001", text=NOTE_TEXT, dataset_tag="n2c2")
    write_canonical_corpus([doc], strength_gold(), path)
    return path


@pytest.fixture
def mock_script(tmp_path: Path) -> Path:
    """
    EN: UMLS prompts get the extended answer; every other prompt falls through to the baseline answer.
    FA: پرامپت‌های UMLS پاسخ کامل‌تر و بقیه پرامپت‌ها پاسخ baseline را می‌گیرند.
    """
    path = tmp_path / "mock_script.jsonl"
    entries: List[Dict[str, str]] = [
        {"match": UMLS_MARKER, "response": format_answer(BASELINE_PAIRS + UMLS_EXTRA_PAIRS)},
        {"match": "", "response": format_answer(BASELINE_PAIRS)},
    ]
    write_jsonl(entries, path)
    return path


@pytest.fixture
def lexicon_file(tmp_path: Path, mini_lexicon: ConceptLexicon) -> Path:
    path = tmp_path / "lexicon.jsonl"
    mini_lexicon.save(path)
    return path


@pytest.fixture
def settings(tmp_path: Path) -> PipelineSettings:
    """EN/FA: تنظیمات پایپ‌لاین با لاگ در پوشه موقت و تأخیرهای کوتاه."""
    return PipelineSettings(log_dir=tmp_path / "logs", max_retries=1, backoff_base=0.0, backoff_max=0.0)
