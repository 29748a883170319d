"""Structural extraction of code elements from a bug case's printed source.

Four element kinds are recognized: loops, conditionals, method calls, and
variables (def-use line sets). The recognizer is a lightweight lexer plus a
brace/keyword walker over the structural Java subset the corpus uses, not a
full grammar. The exact ruleset (what counts as an element and what its span
is) is documented in docs/EXTRACTION_RULES.md; the per-case element counts it
produces are pinned by golden tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .corpus import BugCase


class UnsupportedConstructError(Exception):
    """Source uses a construct outside the supported structural subset."""

    def __init__(self, line: int, what: str):
        self.line = line
        self.what = what
        super().__init__(f"unsupported construct at line {line}: {what}")


class ElementKind(enum.Enum):
    LOOP = "loop"
    CONDITIONAL = "conditional"
    METHOD_CALL = "method_call"
    VARIABLE = "variable"


KIND_ORDER = {
    ElementKind.LOOP: 0,
    ElementKind.CONDITIONAL: 1,
    ElementKind.METHOD_CALL: 2,
    ElementKind.VARIABLE: 3,
}


@dataclass(frozen=True)
class CodeElement:
    element_id: str
    kind: ElementKind
    name: str  # call target or variable name; empty for loop/conditional
    span: frozenset[int]

    @property
    def min_line(self) -> int:
        return min(self.span)

    @property
    def max_line(self) -> int:
        return max(self.span)


KEYWORDS = {
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char",
    "class", "const", "continue", "default", "do", "double", "else", "enum",
    "extends", "final", "finally", "float", "for", "goto", "if", "implements",
    "import", "instanceof", "int", "interface", "long", "native", "new",
    "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while", "true", "false", "null",
}
PRIMITIVES = {"boolean", "byte", "char", "short", "int", "long", "float", "double"}

_MULTI_OPS = (
    ">>>=", "<<=", ">>=", ">>>", "==", "!=", "<=", ">=", "&&", "||", "++",
    "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "->", "::",
)


@dataclass
class Token:
    kind: str  # ident | kw | num | str | char | punct
    text: str
    line: int
    idx: int = -1


def _tokenize(source_lines) -> list[Token]:
    tokens: list[Token] = []
    in_block_comment = False
    for sl in source_lines:
        text, n = sl.text, sl.line
        i = 0
        while i < len(text):
            if in_block_comment:
                end = text.find("*/", i)
                if end < 0:
                    i = len(text)
                else:
                    in_block_comment = False
                    i = end + 2
                continue
            ch = text[i]
            if ch in " \t\r":
                i += 1
                continue
            if text.startswith("//", i):
                break
            if text.startswith("/*", i):
                in_block_comment = True
                i += 2
                continue
            if ch == '"' or ch == "'":
                quote = ch
                j = i + 1
                while j < len(text):
                    if text[j] == "\\":
                        j += 2
                        continue
                    if text[j] == quote:
                        break
                    j += 1
                tokens.append(Token("str" if quote == '"' else "char", text[i:j + 1], n))
                i = j + 1
                continue
            if ch.isalpha() or ch == "_" or ch == "$":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] in "_$"):
                    j += 1
                word = text[i:j]
                tokens.append(Token("kw" if word in KEYWORDS else "ident", word, n))
                i = j
                continue
            if ch.isdigit() or (ch == "." and i + 1 < len(text) and text[i + 1].isdigit()):
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] in "._xXeE+-"):
                    # stop a numeric scan before operators like 10*x or 255.0);
                    if text[j] in "+-" and text[j - 1] not in "eE":
                        break
                    if text[j] in "*/(),;":
                        break
                    j += 1
                tokens.append(Token("num", text[i:j], n))
                i = j
                continue
            matched = False
            for op in _MULTI_OPS:
                if text.startswith(op, i):
                    tokens.append(Token("punct", op, n))
                    i += len(op)
                    matched = True
                    break
            if matched:
                continue
            tokens.append(Token("punct", ch, n))
            i += 1
    for k, t in enumerate(tokens):
        t.idx = k
    return tokens


class _Walker:
    """Single pass over the token stream collecting structure facts."""

    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.n = len(tokens)
        self.conditionals: list[tuple[int, int]] = []  # (start_line, end_line)
        self.loops: list[tuple[int, int]] = []
        self.excluded: list[tuple[int, int]] = []  # token idx ranges: throw stmts, catch blocks
        self.stmt_extent: dict[int, tuple[int, int]] = {}  # token idx -> (first_line, last_line)
        self.body_start = 0

    # -- token helpers ----------------------------------------------------
    def _tok(self, i) -> Token | None:
        return self.toks[i] if 0 <= i < self.n else None

    def _match_group(self, i: int) -> int:
        """i at an opening bracket; return index of matching closer."""
        openers = {"(": ")", "[": "]", "{": "}"}
        close = openers[self.toks[i].text]
        opener = self.toks[i].text
        depth = 0
        j = i
        while j < self.n:
            t = self.toks[j].text
            if t == opener:
                depth += 1
            elif t == close:
                depth -= 1
                if depth == 0:
                    return j
            j += 1
        return self.n - 1

    def _mark_stmt(self, a: int, b: int):
        lo = min(self.toks[k].line for k in range(a, b + 1))
        hi = max(self.toks[k].line for k in range(a, b + 1))
        for k in range(a, b + 1):
            self.stmt_extent[k] = (lo, hi)

    def _check_supported(self, i: int):
        t = self.toks[i]
        if t.text in ("->", "::"):
            raise UnsupportedConstructError(t.line, f"'{t.text}' expression")
        if t.kind == "kw" and t.text in ("class", "interface", "enum", "synchronized", "assert"):
            raise UnsupportedConstructError(t.line, f"'{t.text}' statement")

    # -- structure --------------------------------------------------------
    def run(self):
        self.body_start = self._find_body_start()
        for t in self.toks[self.body_start:]:
            if t.text in ("->", "::"):
                raise UnsupportedConstructError(t.line, f"'{t.text}' expression")
        i = self.body_start
        while i < self.n:
            i = self._statement(i)

    def _find_body_start(self) -> int:
        """Consume a method signature when present; return index of first body token."""
        first_brace = next((k for k in range(self.n) if self.toks[k].text == "{"), None)
        if first_brace is None:
            return 0
        head = self.toks[:first_brace]
        # a statement keyword before the first brace means this is a bare snippet
        for t in head:
            if t.kind == "kw" and t.text in ("if", "while", "for", "do", "switch", "try", "return", "throw"):
                return 0
        if not any(t.text == "(" for t in head):
            return 0
        self._mark_stmt(0, first_brace)
        return first_brace + 1

    def signature_params(self) -> list[tuple[str, int]]:
        """Parameter names with their declaring token indices, from the signature."""
        if self.body_start == 0:
            return []
        open_idx = next((k for k in range(self.body_start) if self.toks[k].text == "("), None)
        if open_idx is None:
            return []
        close_idx = self._match_group(open_idx)
        params = []
        depth = {"(": 0, "[": 0, "<": 0}
        seg: list[Token] = []

        def flush():
            idents = [t for t in seg if t.kind == "ident"]
            if idents:
                params.append((idents[-1].text, idents[-1].idx))

        for k in range(open_idx + 1, close_idx):
            t = self.toks[k]
            if t.text in "([<":
                depth[t.text] += 1
            elif t.text == ")":
                depth["("] -= 1
            elif t.text == "]":
                depth["["] -= 1
            elif t.text == ">":
                depth["<"] = max(0, depth["<"] - 1)
            if t.text == "," and not any(depth.values()):
                flush()
                seg = []
            else:
                seg.append(t)
        flush()
        return params

    def _statement(self, i: int) -> int:
        t = self._tok(i)
        if t is None:
            return self.n
        self._check_supported(i)
        txt = t.text
        if txt == "}":
            self.stmt_extent[i] = (t.line, t.line)
            return i + 1
        if txt == "{":
            self.stmt_extent[i] = (t.line, t.line)
            return i + 1
        if txt == "if":
            end_idx, _ = self._if_statement(i)
            return end_idx
        if txt in ("while", "for"):
            return self._loop(i)
        if txt == "do":
            return self._do_loop(i)
        if txt == "switch":
            return self._switch(i)
        if txt == "try":
            return self._try(i)
        if txt == "catch" or txt == "finally":
            # reached only for catch/finally not attached via _try (defensive)
            return self._catch_or_finally(i)
        if txt == "throw":
            j = self._scan_simple(i)
            self.excluded.append((i, j))
            return j + 1
        if txt == "else":
            # dangling else (handled inside _if_statement normally)
            self.stmt_extent[i] = (t.line, t.line)
            return i + 1
        j = self._scan_simple(i)
        return j + 1

    def _scan_simple(self, i: int) -> int:
        """Consume a simple statement through its ';' (depth aware); returns ';' index."""
        depth = 0
        j = i
        while j < self.n:
            txt = self.toks[j].text
            if txt in "([":
                depth += 1
            elif txt in ")]":
                depth -= 1
            elif txt == ";" and depth <= 0:
                break
            elif txt == "{" and depth <= 0:
                # e.g. array initializer or anonymous class: unsupported
                raise UnsupportedConstructError(self.toks[j].line, "block inside expression statement")
            j += 1
        j = min(j, self.n - 1)
        self._mark_stmt(i, j)
        return j

    def _header(self, i: int) -> int:
        """Consume keyword + parenthesized header; returns index after ')'."""
        k = i + 1
        while k < self.n and self.toks[k].text != "(":
            k += 1
        close = self._match_group(k)
        self._mark_stmt(i, close)
        return close + 1

    def _block_or_statement(self, i: int) -> int:
        """Consume a braced block or a single statement; returns index after it."""
        if self._tok(i) is not None and self.toks[i].text == "{":
            close = self._match_group(i)
            self.stmt_extent[i] = (self.toks[i].line, self.toks[i].line)
            self.stmt_extent[close] = (self.toks[close].line, self.toks[close].line)
            j = i + 1
            while j < close:
                j = self._statement(j)
            return close + 1
        return self._statement(i)

    def _if_statement(self, i: int) -> tuple[int, int]:
        """Parse if/else chain; records one conditional per if. Returns (next_idx, chain_end_line)."""
        start_line = self.toks[i].line
        after_header = self._header(i)
        after_body = self._block_or_statement(after_header)
        end_line = self.toks[min(after_body - 1, self.n - 1)].line
        nxt = self._tok(after_body)
        if nxt is not None and nxt.text == "else":
            self.stmt_extent[after_body] = (nxt.line, nxt.line)
            after_else = after_body + 1
            branch = self._tok(after_else)
            if branch is not None and branch.text == "if":
                after_body, end_line = self._if_statement(after_else)
            else:
                after_body = self._block_or_statement(after_else)
                end_line = self.toks[min(after_body - 1, self.n - 1)].line
        self.conditionals.append((start_line, end_line))
        return after_body, end_line

    def _loop(self, i: int) -> int:
        start_line = self.toks[i].line
        after_header = self._header(i)
        after_body = self._block_or_statement(after_header)
        self.loops.append((start_line, self.toks[min(after_body - 1, self.n - 1)].line))
        return after_body

    def _do_loop(self, i: int) -> int:
        start_line = self.toks[i].line
        after_body = self._block_or_statement(i + 1)
        j = after_body
        if self._tok(j) is not None and self.toks[j].text == "while":
            j = self._header(j)
            if self._tok(j) is not None and self.toks[j].text == ";":
                j += 1
        self.loops.append((start_line, self.toks[min(j - 1, self.n - 1)].line))
        return j

    def _switch(self, i: int) -> int:
        start_line = self.toks[i].line
        after_header = self._header(i)
        if self._tok(after_header) is None or self.toks[after_header].text != "{":
            raise UnsupportedConstructError(start_line, "switch without braced body")
        close = self._match_group(after_header)
        j = after_header + 1
        while j < close:
            t = self.toks[j]
            if t.kind == "kw" and t.text in ("case", "default"):
                k = j
                while k < close and self.toks[k].text != ":":
                    k += 1
                self._mark_stmt(j, k)
                j = k + 1
                continue
            j = self._statement(j)
        self.conditionals.append((start_line, self.toks[close].line))
        return close + 1

    def _try(self, i: int) -> int:
        self.stmt_extent[i] = (self.toks[i].line, self.toks[i].line)
        after_body = self._block_or_statement(i + 1)
        j = after_body
        while self._tok(j) is not None and self.toks[j].text in ("catch", "finally"):
            j = self._catch_or_finally(j)
        return j

    def _catch_or_finally(self, i: int) -> int:
        is_catch = self.toks[i].text == "catch"
        j = i + 1
        if is_catch and self._tok(j) is not None and self.toks[j].text == "(":
            j = self._match_group(j) + 1
        if self._tok(j) is None or self.toks[j].text != "{":
            raise UnsupportedConstructError(self.toks[i].line, "catch/finally without braced block")
        close = self._match_group(j)
        self._mark_stmt(i, close)
        if is_catch:
            self.excluded.append((i, close))
        else:
            k = j + 1
            while k < close:
                k = self._statement(k)
        return close + 1


def _in_ranges(idx: int, ranges: list[tuple[int, int]]) -> bool:
    return any(a <= idx <= b for a, b in ranges)


def _collect_calls(w: _Walker) -> list[tuple[str, int, int, int]]:
    """Return surviving call elements as (name, line, head_idx, arg_close_idx)."""
    toks = w.toks
    sites = []  # (head_idx, name, line, open_idx, close_idx, chain_continuation)
    for t in toks[w.body_start:]:
        if t.kind != "ident":
            continue
        i = t.idx
        if _in_ranges(i, w.excluded):
            continue
        nxt = w._tok(i + 1)
        prev = w._tok(i - 1)
        if nxt is not None and nxt.text == "(":
            close = w._match_group(i + 1)
            chain = False
            if prev is not None and prev.text == ".":
                before = w._tok(i - 2)
                if before is not None and before.text == ")":
                    # chained onto a call result only when that ')' closes a call's arguments
                    open_of = _match_back(toks, i - 2)
                    head = w._tok(open_of - 1)
                    chain = head is not None and (head.kind == "ident")
            sites.append((i, t.text, t.line, i + 1, close, chain))
        elif nxt is not None and nxt.text == "[" and prev is not None and prev.text == "new":
            close = w._match_group(i + 1)
            sites.append((i, t.text, t.line, i + 1, close, False))
    surviving = []
    for (i, name, line, op, cl, chain) in sites:
        if chain:
            continue
        absorbed = False
        for (i2, _n2, line2, op2, cl2, _c2) in sites:
            if i2 == i:
                continue
            if op2 < i < cl2 and line2 == line:
                absorbed = True
                break
        if not absorbed:
            surviving.append((name, line, i, cl))
    return surviving


def _match_back(toks: list[Token], close_idx: int) -> int:
    """Index of the '(' matching a ')' at close_idx."""
    depth = 0
    j = close_idx
    while j >= 0:
        if toks[j].text == ")":
            depth += 1
        elif toks[j].text == "(":
            depth -= 1
            if depth == 0:
                return j
        j -= 1
    return 0


def _collect_ternaries(w: _Walker) -> list[tuple[int, int]]:
    """Conditional-expression spans: paren extent when parenthesized, else statement extent."""
    spans = []
    toks = w.toks
    # collect paren groups so a parenthesized ternary can take its paren extent
    groups: list[tuple[int, int]] = []
    opens: list[int] = []
    for t in toks:
        if t.text == "(":
            opens.append(t.idx)
        elif t.text == ")" and opens:
            groups.append((opens.pop(), t.idx))
    for t in toks[w.body_start:]:
        if t.text != "?" or _in_ranges(t.idx, w.excluded):
            continue
        prev = w._tok(t.idx - 1)
        nxt = w._tok(t.idx + 1)
        if (prev is not None and prev.text == "<") or (nxt is not None and nxt.text == ">"):
            continue  # generics wildcard
        group = None
        for (a, b) in groups:
            if a < t.idx < b:
                if group is None or (a > group[0]):
                    group = (a, b)
        if group is not None:
            lo = toks[group[0]].line
            hi = toks[group[1]].line
        else:
            lo, hi = w.stmt_extent.get(t.idx, (t.line, t.line))
        spans.append((lo, hi))
    return spans


def _collect_variables(w: _Walker) -> list[tuple[str, int, set[int]]]:
    """Variable elements as (name, decl_idx, line span). One element per declaration."""
    toks = w.toks
    decls: list[tuple[str, int]] = list(w.signature_params())
    for t in toks[w.body_start:]:
        if t.kind != "ident" or _in_ranges(t.idx, w.excluded):
            continue
        nxt = w._tok(t.idx + 1)
        prev = w._tok(t.idx - 1)
        if nxt is None or nxt.text not in ("=", ";", ":"):
            continue
        if prev is None:
            continue
        prev_ok = (prev.kind == "ident") or prev.text in ("]", ">") or prev.text in PRIMITIVES
        if not prev_ok:
            continue
        if prev.kind == "ident":
            before = w._tok(prev.idx - 1)
            if before is not None and before.text == ".":
                continue  # qualified field assignment like this.x = ...
        decls.append((t.text, t.idx))
    # bare snippets use names with no visible declaration; treat lowercase
    # identifiers in value position as implicit variables
    declared_names = {name for name, _ in decls}
    for t in toks[w.body_start:]:
        if t.kind != "ident" or t.text in declared_names or _in_ranges(t.idx, w.excluded):
            continue
        if not t.text[0].islower():
            continue
        prev = w._tok(t.idx - 1)
        nxt = w._tok(t.idx + 1)
        if prev is not None and prev.text in (".", "new"):
            continue
        if nxt is not None and nxt.text == "(":
            continue
        if prev is not None and (prev.kind == "ident" or prev.text in ("]", ">")
                                 or prev.text in PRIMITIVES):
            continue  # this is a type-then-name declaration handled above
        decls.append((t.text, t.idx))
        declared_names.add(t.text)
    decls.sort(key=lambda d: d[1])
    elements: list[tuple[str, int, set[int]]] = [(name, idx, set()) for name, idx in decls]
    by_name: dict[str, list[int]] = {}
    for pos, (name, idx, _s) in enumerate(elements):
        by_name.setdefault(name, []).append(pos)
    known = set(by_name)

    def bind(name: str, use_idx: int) -> int:
        candidates = by_name[name]
        best = candidates[0]
        for pos in candidates:
            if elements[pos][1] <= use_idx:
                best = pos
        return best

    for t in toks:
        if t.kind != "ident" or t.text not in known:
            continue
        if _in_ranges(t.idx, w.excluded):
            continue
        prev = w._tok(t.idx - 1)
        nxt = w._tok(t.idx + 1)
        if prev is not None and prev.text in (".", "new"):
            continue
        if nxt is not None and nxt.text == "(":
            continue  # a call, not a variable use
        lo, hi = w.stmt_extent.get(t.idx, (t.line, t.line))
        elements[bind(t.text, t.idx)][2].update(range(lo, hi + 1))
    return [(name, idx, span) for name, idx, span in elements if span]


def extract_elements(case: BugCase) -> list[CodeElement]:
    """Deterministic element list for a validated case, in source order."""
    tokens = _tokenize(case.source_lines)
    walker = _Walker(tokens)
    walker.run()

    raw: list[tuple[ElementKind, str, frozenset[int], int]] = []
    for (lo, hi) in walker.loops:
        raw.append((ElementKind.LOOP, "", frozenset(range(lo, hi + 1)), lo))
    for (lo, hi) in walker.conditionals:
        raw.append((ElementKind.CONDITIONAL, "", frozenset(range(lo, hi + 1)), lo))
    for (lo, hi) in _collect_ternaries(walker):
        raw.append((ElementKind.CONDITIONAL, "", frozenset(range(lo, hi + 1)), lo))
    for (name, line, idx, _cl) in _collect_calls(walker):
        raw.append((ElementKind.METHOD_CALL, name, frozenset([line]), idx))
    for (name, idx, span) in _collect_variables(walker):
        raw.append((ElementKind.VARIABLE, name, frozenset(span), idx))

    valid_lines = set(case.line_numbers())
    for kind, name, span, _o in raw:
        stray = span - valid_lines
        if stray:
            raise UnsupportedConstructError(min(stray), f"{kind.value} span escapes the listing")

    dedup: dict[tuple[ElementKind, str, frozenset[int]], int] = {}
    ordered = []
    for kind, name, span, order in raw:
        key = (kind, name, span)
        if key in dedup:
            continue
        dedup[key] = order
        ordered.append((kind, name, span, order))

    ordered.sort(key=lambda e: (min(e[2]), KIND_ORDER[e[0]], e[1], e[3]))
    return [
        CodeElement(element_id=f"{case.case_id}-E{k + 1:03d}", kind=kind, name=name, span=span)
        for k, (kind, name, span, _o) in enumerate(ordered)
    ]


def kind_counts(elements: list[CodeElement]) -> dict[str, int]:
    counts = {k.value: 0 for k in ElementKind}
    for e in elements:
        counts[e.kind.value] += 1
    return counts


def coverage_gaps(case: BugCase, elements: list[CodeElement]) -> set[int]:
    """Executable lines not covered by any element span (must be empty)."""
    covered: set[int] = set()
    for e in elements:
        covered |= e.span
    return case.executable_lines() - covered
