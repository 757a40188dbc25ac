"""Wiki dump ingestion: stream pages, clean wikitext, build the typed graph.

The pipeline is ``parse_dump`` -> namespace filtering -> ``clean_wikitext``
-> ``extract_links`` -> ``classify_relationship``, assembled end to end by
``build_corpus``. Node ids are assigned densely in page order so two runs
over the same dump produce byte-identical output files.
"""

from __future__ import annotations

import gzip
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Callable, Iterable, Iterator

from .errors import DumpParseError
from .model import Edge, Node, NodeType, RelType
from .storage import (
    EDGES_FILENAME,
    NODES_FILENAME,
    STATS_FILENAME,
    write_edges_csv,
    write_nodes_jsonl,
    write_stats_json,
)

logger = logging.getLogger(__name__)

# Namespace prefixes that map to node types. Everything else with a colon
# prefix (Talk, User, Category, ...) is out of scope and dropped.
_PREFIX_TYPES = {
    "definition": NodeType.DEFINITION,
    "axiom": NodeType.AXIOM,
}

_REDIRECT_RE = re.compile(r"^\s*#redirect\s*\[\[([^\[\]|#]+)", re.IGNORECASE)

MAX_REDIRECT_HOPS = 16


@dataclass
class RawPage:
    title: str
    namespace: str
    wikitext: str
    redirect_to: str | None = None


@dataclass
class IngestStats:
    pages_seen: int = 0
    pages_kept: int = 0
    pages_dropped: int = 0
    redirects_collapsed: int = 0
    edges_kept: int = 0
    edges_dropped_dangling: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pages_seen": self.pages_seen,
            "pages_kept": self.pages_kept,
            "pages_dropped": self.pages_dropped,
            "redirects_collapsed": self.redirects_collapsed,
            "edges_kept": self.edges_kept,
            "edges_dropped_dangling": self.edges_dropped_dangling,
            "warnings": len(self.warnings),
        }


# ---------------------------------------------------------------------------
# dump parsing
# ---------------------------------------------------------------------------


def _open_stream(source: str | Path | BinaryIO) -> BinaryIO:
    if isinstance(source, (str, Path)):
        fh: BinaryIO = open(source, "rb")
    else:
        fh = source
    magic = fh.read(2)
    fh.seek(0)
    if magic == b"\x1f\x8b":
        return gzip.open(fh, "rb")  # type: ignore[return-value]
    return fh


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _page_namespace(title: str) -> str:
    if ":" in title:
        return title.split(":", 1)[0].strip()
    return "Main"


def _page_from_elem(elem: ET.Element) -> RawPage | None:
    title = None
    redirect_to = None
    text = ""
    for child in elem:
        name = _local(child.tag)
        if name == "title":
            title = (child.text or "").strip()
        elif name == "redirect":
            redirect_to = child.get("title")
        elif name == "revision":
            # Dumps may carry several revisions; the last one is current.
            for sub in child:
                if _local(sub.tag) == "text":
                    text = sub.text or ""
    if not title:
        return None
    if redirect_to is None:
        m = _REDIRECT_RE.match(text)
        if m:
            redirect_to = m.group(1).strip()
    return RawPage(title=title, namespace=_page_namespace(title), wikitext=text, redirect_to=redirect_to)


def parse_dump(
    source: str | Path | BinaryIO,
    on_warning: Callable[[str], None] = logger.warning,
) -> Iterator[RawPage]:
    """Stream pages out of a MediaWiki XML export, plain or gzipped.

    Processed elements are released as we go so memory stays flat on
    multi-gigabyte dumps. Pages with no title are skipped with a warning.
    """
    stream = _open_stream(source)
    try:
        context = ET.iterparse(stream, events=("start", "end"))
        try:
            _, root = next(context)
        except StopIteration:
            raise DumpParseError("empty XML document") from None
        for event, elem in context:
            if event == "end" and _local(elem.tag) == "page":
                page = _page_from_elem(elem)
                if page is None:
                    on_warning("skipping page element with no title")
                else:
                    yield page
                elem.clear()
                root.clear()
    except ET.ParseError as exc:
        line, col = exc.position
        raise DumpParseError(f"malformed XML at line {line}, column {col}: {exc.msg}") from exc
    finally:
        if stream is not source:
            stream.close()


def page_node_type(title: str) -> NodeType | None:
    """Node type a page title maps to, or None when the page is out of scope."""
    title = title.strip()
    if ":" in title:
        prefix = title.split(":", 1)[0].strip().casefold()
        return _PREFIX_TYPES.get(prefix)
    if "/proof" in title.casefold():
        return NodeType.PROOF
    return NodeType.THEOREM


def filter_namespaces(pages: Iterable[RawPage], stats: IngestStats | None = None) -> Iterator[RawPage]:
    """Keep definition, axiom, and main-namespace pages; drop the rest."""
    for page in pages:
        if page_node_type(page.title) is None:
            if stats is not None:
                stats.pages_dropped += 1
            continue
        yield page


def extract_name(title: str) -> str:
    if ":" in title:
        prefix, rest = title.split(":", 1)
        if prefix.strip().casefold() in _PREFIX_TYPES:
            return rest.strip()
    return title.strip()


# ---------------------------------------------------------------------------
# wikitext cleaning
# ---------------------------------------------------------------------------

_COMMENT_RE = re.compile(r"<!--.*?(?:-->|\Z)", re.DOTALL)
_CATEGORY_RE = re.compile(r"\[\[\s*category\s*:[^\[\]]*\]\]\n?", re.IGNORECASE)
_LINK_NORM_RE = re.compile(r"\[\[([^\[\]]+)\]\]")
_HEADING_RE = re.compile(r"^(={1,6})\s*(.*?)\s*\1\s*$")
_BLANK_RUN_RE = re.compile(r"\n{3,}")

# Headings whose whole section is boilerplate rather than mathematics.
_DROPPED_SECTIONS = {
    "sources",
    "also see",
    "see also",
    "historical note",
    "internationalization",
    "linguistic note",
    "external links",
    "references",
}

# Template-name prefixes (lowercased, whitespace and underscores removed)
# for navigation, sourcing, and maintenance templates. Content templates
# such as {{eqn}} are untouched.
_DROPPED_TEMPLATE_PREFIXES = (
    "source",
    "cite",
    "citation",
    "ref",
    "nav",
    "book",
    "stub",
    "namedfor",
    "tidy",
    "delete",
    "merge",
    "questionable",
    "proofread",
    "proofwanted",
    "mistake",
    "improve",
    "expand",
    "extract",
    "help",
    "wip",
    "defaultsort",
    "displaytitle",
    "qed",
    "categ",
    "languagecategory",
    "subjectcategory",
)

_MAX_CLEAN_PASSES = 25


def _template_name(body: str) -> str:
    name = body.split("|", 1)[0].split(":", 1)[0]
    return re.sub(r"[\s_]+", "", name).casefold()


def _is_dropped_template(body: str) -> bool:
    return _template_name(body).startswith(_DROPPED_TEMPLATE_PREFIXES)


def _match_template(text: str, start: int) -> int:
    """Index one past the closing braces of the template at ``start``, or -1."""
    depth = 1
    i = start + 2
    n = len(text)
    while i < n:
        open_at = text.find("{{", i)
        close_at = text.find("}}", i)
        if close_at == -1:
            return -1
        if open_at != -1 and open_at < close_at:
            depth += 1
            i = open_at + 2
        else:
            depth -= 1
            i = close_at + 2
            if depth == 0:
                return i
    return -1


def _strip_templates(text: str) -> str:
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        open_at = text.find("{{", i)
        if open_at == -1:
            out.append(text[i:])
            break
        out.append(text[i:open_at])
        end = _match_template(text, open_at)
        if end == -1:
            # Unbalanced braces: keep the rest verbatim.
            out.append(text[open_at:])
            break
        body = text[open_at + 2 : end - 2]
        if _is_dropped_template(body):
            # Swallow the newline too when the template sat on its own line.
            on_own_line = open_at == 0 or text[open_at - 1] == "\n"
            if on_own_line and end < n and text[end] == "\n":
                end += 1
        else:
            out.append("{{")
            out.append(_strip_templates(body))
            out.append("}}")
        i = end
    return "".join(out)


def _strip_sections(text: str) -> str:
    lines = text.split("\n")
    kept: list[str] = []
    skip_level: int | None = None
    for line in lines:
        m = _HEADING_RE.match(line)
        if m:
            level = len(m.group(1))
            if skip_level is not None and level <= skip_level:
                skip_level = None
            if skip_level is None and m.group(2).strip().casefold() in _DROPPED_SECTIONS:
                skip_level = level
                continue
        if skip_level is None:
            kept.append(line)
    return "\n".join(kept)


def _normalize_link(m: re.Match[str]) -> str:
    inner = m.group(1)
    if "|" in inner:
        target, label = inner.split("|", 1)
        label_part = "|" + label
    else:
        target, label_part = inner, ""
    target = re.sub(r"\s+", " ", target).strip()
    return f"[[{target}{label_part}]]"


def _clean_once(text: str) -> str:
    text = _COMMENT_RE.sub("", text)
    text = _CATEGORY_RE.sub("", text)
    text = _strip_templates(text)
    text = _strip_sections(text)
    text = _LINK_NORM_RE.sub(_normalize_link, text)
    text = "\n".join(line.rstrip() for line in text.split("\n"))
    text = _BLANK_RUN_RE.sub("\n\n", text)
    return text.strip()


def clean_wikitext(raw: str) -> str:
    """Strip boilerplate from wikitext, leaving prose, math, and links.

    Passes repeat until the text stops changing: removing one construct can
    expose another (a comment whose removal splices a new comment together,
    a template revealed by a stripped section).
    """
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    for _ in range(_MAX_CLEAN_PASSES):
        cleaned = _clean_once(text)
        if cleaned == text:
            return cleaned
        text = cleaned
    logger.warning("wikitext cleaning did not converge in %d passes", _MAX_CLEAN_PASSES)
    return text


# ---------------------------------------------------------------------------
# link extraction and classification
# ---------------------------------------------------------------------------

_LINK_RE = re.compile(r"\[\[([^\[\]]+)\]\]")
_SKIPPED_LINK_PREFIXES = {"category", "file", "image"}
_CONTEXT_RADIUS = 240

# Phrases near a proof-to-proof link that signal an argument-shape parallel.
_SIMILARITY_CUES = ("similarly", "analogous", "mutatis mutandis", "same argument")


def _context_window(text: str, start: int, end: int, radius: int = _CONTEXT_RADIUS) -> str:
    lo = max(0, start - radius)
    starts = [lo]
    nl = text.rfind("\n", lo, start)
    if nl != -1:
        starts.append(nl + 1)
    dot = text.rfind(". ", lo, start)
    if dot != -1:
        starts.append(dot + 2)
    s = max(starts)
    hi = min(len(text), end + radius)
    ends = [hi]
    nl = text.find("\n", end, hi)
    if nl != -1:
        ends.append(nl)
    dot = text.find(". ", end, hi)
    if dot != -1:
        ends.append(dot + 1)
    e = min(ends)
    return text[s:e].strip()


def extract_links(content: str) -> list[tuple[str, str]]:
    """All wiki link targets in order, each with a sentence-sized context window."""
    links: list[tuple[str, str]] = []
    for m in _LINK_RE.finditer(content):
        inner = m.group(1)
        target = inner.split("|", 1)[0].split("#", 1)[0].strip()
        if not target:
            continue
        if ":" in target and target.split(":", 1)[0].strip().casefold() in _SKIPPED_LINK_PREFIXES:
            continue
        links.append((target, _context_window(content, m.start(), m.end())))
    return links


def _is_technique_title(title: str) -> bool:
    name = extract_name(title).casefold()
    return name.startswith("proof by") or "technique" in name


def classify_relationship(source: Node, target_title: str, context: str) -> RelType:
    """Pick the most specific relationship the rule table supports.

    Precedence: technique citation, then axiom use, then definition use,
    then proof parallels and dependency, then plain LINK.
    """
    target_type = page_node_type(target_title)
    if source.node_type is NodeType.PROOF and _is_technique_title(target_title):
        return RelType.PROOF_TECHNIQUE
    if target_type is NodeType.AXIOM:
        return RelType.USES_AXIOM
    if target_type is NodeType.DEFINITION:
        if source.node_type in (NodeType.PROOF, NodeType.THEOREM):
            return RelType.USES_DEFINITION
        if source.node_type is NodeType.DEFINITION:
            return RelType.RELATED_DEFINITION
        return RelType.LINK
    if source.node_type is NodeType.PROOF and target_type is NodeType.PROOF:
        lowered = context.casefold()
        if any(cue in lowered for cue in _SIMILARITY_CUES):
            return RelType.SIMILAR_PROOF
        return RelType.LINK
    if source.node_type is NodeType.PROOF and target_type is NodeType.THEOREM:
        return RelType.PROOF_DEPENDENCY
    return RelType.LINK


# ---------------------------------------------------------------------------
# corpus assembly
# ---------------------------------------------------------------------------


def _norm_title(title: str) -> str:
    return re.sub(r"\s+", " ", title).strip().casefold()


def build_corpus(
    source: str | Path | BinaryIO,
) -> tuple[list[Node], list[Edge], IngestStats]:
    """One pass over a dump: nodes with dense ids, typed edges, counters.

    Redirect pages become title aliases rather than nodes; links whose
    resolved target is not in the corpus are dropped and counted.
    """
    stats = IngestStats()
    kept: list[tuple[RawPage, NodeType]] = []
    redirects: dict[str, str] = {}

    def record_warning(msg: str) -> None:
        stats.warnings.append(msg)
        logger.warning("%s", msg)

    for page in parse_dump(source, on_warning=record_warning):
        stats.pages_seen += 1
        if page.redirect_to:
            redirects[_norm_title(page.title)] = page.redirect_to
            stats.redirects_collapsed += 1
            continue
        node_type = page_node_type(page.title)
        if node_type is None:
            stats.pages_dropped += 1
            continue
        kept.append((page, node_type))
    stats.pages_kept = len(kept)

    nodes: list[Node] = []
    title_to_id: dict[str, int] = {}
    for node_id, (page, node_type) in enumerate(kept):
        node = Node(
            id=node_id,
            node_type=node_type,
            title=page.title,
            name=extract_name(page.title),
            content=clean_wikitext(page.wikitext),
        )
        nodes.append(node)
        title_to_id[_norm_title(page.title)] = node_id

    def resolve(title: str) -> int | None:
        key = _norm_title(title)
        seen: set[str] = set()
        for _ in range(MAX_REDIRECT_HOPS):
            if key in title_to_id:
                return title_to_id[key]
            if key not in redirects or key in seen:
                return None
            seen.add(key)
            key = _norm_title(redirects[key])
        return None

    edges: list[Edge] = []
    seen_edges: set[tuple[int, int, RelType]] = set()
    for node in nodes:
        for target, context in extract_links(node.content):
            target_id = resolve(target)
            if target_id is None:
                stats.edges_dropped_dangling += 1
                continue
            rel = classify_relationship(node, target, context)
            key = (node.id, target_id, rel)
            if key in seen_edges:
                continue
            seen_edges.add(key)
            edges.append(Edge(node.id, target_id, rel))
    stats.edges_kept = len(edges)
    return nodes, edges, stats


def write_outputs(
    nodes: Iterable[Node],
    edges: Iterable[Edge],
    stats: IngestStats,
    out_dir: str | Path,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_nodes_jsonl(nodes, out / NODES_FILENAME)
    write_edges_csv(edges, out / EDGES_FILENAME)
    write_stats_json(stats.to_dict(), out / STATS_FILENAME)
