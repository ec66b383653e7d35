"""Parser and canonical printer for ``.pss`` class files.

A ``.pss`` file holds exactly one annotated class declaration::

    @Panel(label="Books", position=1, visible=true)
    class Book extends Item {
        @UiField(label="Title")
        String title;

        String getTitle() {
            return this.title;
        }
    }

Method bodies are not parsed into statements. They are kept as brace-balanced
text, one stripped line per source line, and re-indented on output.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path, PurePosixPath
from typing import Iterator, NamedTuple, Union

__all__ = [
    "BUILTIN_TYPES",
    "PRIMITIVE_TYPES",
    "Annotation",
    "ClassDecl",
    "ClassListing",
    "FieldDecl",
    "MethodDecl",
    "Param",
    "SourceSyntaxError",
    "SourceUnit",
    "list_classes",
    "parse_unit",
    "print_unit",
    "read_unit",
]

SOURCE_SUFFIX = ".pss"
INDENT = "    "

PRIMITIVE_TYPES = ("int", "double", "boolean", "void")
BUILTIN_TYPES = ("int", "double", "boolean", "String", "void")
RESERVED = frozenset({"class", "extends", "true", "false", *PRIMITIVE_TYPES})

Literal = Union[str, int, bool]


class SourceSyntaxError(SyntaxError):
    """Raised for any input that does not follow the class grammar."""

    def __init__(self, message: str, line: int, column: int, path: str | None = None):
        super().__init__(f"{path or '<source>'}:{line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        # stdlib SyntaxError fields, so tracebacks point at the right spot
        self.lineno = line
        self.offset = column
        self.filename = path


@dataclass(frozen=True)
class Annotation:
    name: str
    args: tuple[tuple[str, Literal], ...] = ()

    def get(self, key: str, default: Literal | None = None) -> Literal | None:
        for k, v in self.args:
            if k == key:
                return v
        return default

    def with_arg(self, key: str, value: Literal) -> Annotation:
        """Return a copy with ``key`` set, replacing in place or appending."""
        args = list(self.args)
        for i, (k, _) in enumerate(args):
            if k == key:
                args[i] = (key, value)
                break
        else:
            args.append((key, value))
        return Annotation(self.name, tuple(args))


@dataclass(frozen=True)
class FieldDecl:
    name: str
    type_ref: str
    annotations: tuple[Annotation, ...] = ()


class Param(NamedTuple):
    name: str
    type_ref: str


@dataclass(frozen=True)
class MethodDecl:
    name: str
    return_type: str
    params: tuple[Param, ...] = ()
    body_text: str = ""
    annotations: tuple[Annotation, ...] = ()


Member = Union[FieldDecl, MethodDecl]


@dataclass(frozen=True)
class ClassDecl:
    name: str
    superclass: str | None = None
    annotations: tuple[Annotation, ...] = ()
    members: tuple[Member, ...] = ()

    @property
    def fields(self) -> tuple[FieldDecl, ...]:
        return tuple(m for m in self.members if isinstance(m, FieldDecl))

    @property
    def methods(self) -> tuple[MethodDecl, ...]:
        return tuple(m for m in self.members if isinstance(m, MethodDecl))

    def member(self, name: str) -> Member | None:
        for m in self.members:
            if m.name == name:
                return m
        return None

    def annotation(self, name: str) -> Annotation | None:
        return _find_annotation(self.annotations, name)


@dataclass(frozen=True)
class SourceUnit:
    file_path: str
    class_decl: ClassDecl

    @property
    def name(self) -> str:
        return self.class_decl.name

    def replace_class(self, **changes) -> SourceUnit:
        return SourceUnit(self.file_path, dataclasses.replace(self.class_decl, **changes))


def _find_annotation(annotations: tuple[Annotation, ...], name: str) -> Annotation | None:
    for a in annotations:
        if a.name == name:
            return a
    return None


# ---------------------------------------------------------------------------
# scanning


def _is_ident_start(ch: str) -> bool:
    return ch == "_" or ("a" <= ch <= "z") or ("A" <= ch <= "Z")


def _is_ident_char(ch: str) -> bool:
    return _is_ident_start(ch) or ("0" <= ch <= "9")


class _Token(NamedTuple):
    kind: str  # ident | string | int | punct | eof
    value: Literal
    pos: int


class _Parser:
    PUNCT = "@(),=;{}"

    def __init__(self, text: str, path: str | None):
        self.text = text
        self.path = path
        self.pos = 0
        self._peeked: _Token | None = None

    # -- positions and errors
    def where(self, pos: int) -> tuple[int, int]:
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, message: str, pos: int | None = None) -> SourceSyntaxError:
        line, col = self.where(self.pos if pos is None else pos)
        return SourceSyntaxError(message, line, col, self.path)

    # -- lexing
    def _skip_trivia(self) -> None:
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            if ch in " \t\r\n":
                self.pos += 1
            elif text.startswith("//", self.pos):
                end = text.find("\n", self.pos)
                self.pos = n if end < 0 else end + 1
            else:
                break

    def _scan_string(self) -> str:
        # self.pos is at the opening quote
        text, n = self.text, len(self.text)
        start = self.pos
        i = self.pos + 1
        out = []
        while True:
            if i >= n or text[i] == "\n":
                raise self.error("unterminated string literal", start)
            ch = text[i]
            if ch == '"':
                self.pos = i + 1
                return "".join(out)
            if ch == "\\":
                if i + 1 < n and text[i + 1] in '"\\':
                    out.append(text[i + 1])
                    i += 2
                    continue
                raise self.error("invalid escape sequence", i)
            out.append(ch)
            i += 1

    def _lex(self) -> _Token:
        self._skip_trivia()
        text, n = self.text, len(self.text)
        if self.pos >= n:
            return _Token("eof", "", self.pos)
        start = self.pos
        ch = text[start]
        if _is_ident_start(ch):
            end = start + 1
            while end < n and _is_ident_char(text[end]):
                end += 1
            self.pos = end
            return _Token("ident", text[start:end], start)
        if ch.isdigit() and ch.isascii():
            end = start + 1
            while end < n and text[end].isdigit() and text[end].isascii():
                end += 1
            if end < n and _is_ident_char(text[end]):
                raise self.error("malformed integer literal", start)
            self.pos = end
            return _Token("int", int(text[start:end]), start)
        if ch == '"':
            return _Token("string", self._scan_string(), start)
        if ch in self.PUNCT:
            self.pos += 1
            return _Token("punct", ch, start)
        raise self.error(f"unexpected character {ch!r}", start)

    def peek(self) -> _Token:
        if self._peeked is None:
            self._peeked = self._lex()
        return self._peeked

    def advance(self) -> _Token:
        tok = self.peek()
        self._peeked = None
        return tok

    def expect(self, value: str) -> _Token:
        tok = self.advance()
        if tok.kind not in ("punct", "ident") or tok.value != value:
            raise self.error(f"expected {value!r}, found {_describe(tok)}", tok.pos)
        return tok

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.advance()
        if tok.kind != "ident" or tok.value in RESERVED:
            raise self.error(f"expected {what}, found {_describe(tok)}", tok.pos)
        return tok.value  # type: ignore[return-value]

    def at(self, value: str) -> bool:
        tok = self.peek()
        return tok.kind in ("punct", "ident") and tok.value == value

    # -- grammar
    def parse_unit(self) -> ClassDecl:
        decl = self.class_decl()
        tok = self.peek()
        if tok.kind != "eof":
            raise self.error(f"expected end of input, found {_describe(tok)}", tok.pos)
        return decl

    def class_decl(self) -> ClassDecl:
        annotations = self.annotations()
        self.expect("class")
        name_pos = self.peek().pos
        name = self.expect_ident("class name")
        if name in BUILTIN_TYPES:
            raise self.error(f"class name {name!r} shadows a built-in type", name_pos)
        superclass = None
        if self.at("extends"):
            self.advance()
            superclass = self.expect_ident("superclass name")
            if superclass in BUILTIN_TYPES:
                raise self.error(f"cannot extend built-in type {superclass!r}")
        self.expect("{")
        members: list[Member] = []
        seen: set[str] = set()
        while not self.at("}"):
            if self.peek().kind == "eof":
                raise self.error("unexpected end of input, expected '}'", self.peek().pos)
            member_pos = self.peek().pos
            member = self.member()
            if member.name in seen:
                raise self.error(f"duplicate member {member.name!r}", member_pos)
            seen.add(member.name)
            members.append(member)
        self.expect("}")
        return ClassDecl(name, superclass, tuple(annotations), tuple(members))

    def annotations(self) -> list[Annotation]:
        out = []
        while self.at("@"):
            out.append(self.annotation())
        return out

    def annotation(self) -> Annotation:
        self.expect("@")
        name = self.expect_ident("annotation name")
        args: list[tuple[str, Literal]] = []
        if self.at("("):
            self.advance()
            keys: set[str] = set()
            if not self.at(")"):
                while True:
                    key_pos = self.peek().pos
                    key = self.expect_ident("argument name")
                    if key in keys:
                        raise self.error(f"duplicate annotation argument {key!r}", key_pos)
                    keys.add(key)
                    self.expect("=")
                    args.append((key, self.literal()))
                    if self.at(","):
                        self.advance()
                        continue
                    break
            self.expect(")")
        return Annotation(name, tuple(args))

    def literal(self) -> Literal:
        tok = self.advance()
        if tok.kind in ("string", "int"):
            return tok.value
        if tok.kind == "ident" and tok.value in ("true", "false"):
            return tok.value == "true"
        raise self.error(f"expected literal, found {_describe(tok)}", tok.pos)

    def type_ref(self) -> str:
        tok = self.advance()
        if tok.kind == "ident" and (tok.value in PRIMITIVE_TYPES or tok.value not in RESERVED):
            return tok.value  # type: ignore[return-value]
        raise self.error(f"expected type, found {_describe(tok)}", tok.pos)

    def member(self) -> Member:
        annotations = tuple(self.annotations())
        type_ref = self.type_ref()
        name = self.expect_ident("member name")
        if self.at(";"):
            self.advance()
            return FieldDecl(name, type_ref, annotations)
        if not self.at("("):
            raise self.error(f"expected ';' or '(', found {_describe(self.peek())}", self.peek().pos)
        self.advance()
        params: list[Param] = []
        if not self.at(")"):
            while True:
                ptype = self.type_ref()
                pname = self.expect_ident("parameter name")
                if any(p.name == pname for p in params):
                    raise self.error(f"duplicate parameter {pname!r}")
                params.append(Param(pname, ptype))
                if self.at(","):
                    self.advance()
                    continue
                break
        self.expect(")")
        if not self.at("{"):
            raise self.error(f"expected method body, found {_describe(self.peek())}", self.peek().pos)
        # the body is raw text; position the cursor on the brace itself
        brace = self.advance()
        body = self.balanced_block(brace.pos)
        return MethodDecl(name, type_ref, tuple(params), body, annotations)

    def balanced_block(self, open_pos: int) -> str:
        text, n = self.text, len(self.text)
        depth = 1
        i = open_pos + 1
        while i < n:
            ch = text[i]
            if ch == '"':
                self.pos = i
                self._scan_string()
                i = self.pos
                continue
            if text.startswith("//", i):
                end = text.find("\n", i)
                i = n if end < 0 else end + 1
                continue
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    self.pos = i + 1
                    return _normalize_body(text[open_pos + 1 : i])
            i += 1
        self.pos = n
        raise self.error("unexpected end of input inside method body", n)


def _describe(tok: _Token) -> str:
    if tok.kind == "eof":
        return "end of input"
    if tok.kind == "string":
        return "string literal"
    return repr(tok.value)


def _normalize_body(raw: str) -> str:
    lines = (line.strip() for line in raw.split("\n"))
    return "\n".join(line for line in lines if line)


def parse_unit(text: str, file_path: str = "<source>") -> SourceUnit:
    """Parse one class file.

    Raises :class:`SourceSyntaxError` carrying the first error position. When
    ``file_path`` names a ``.pss`` file its stem must match the class name.
    """
    parser = _Parser(text, file_path)
    decl = parser.parse_unit()
    if file_path.endswith(SOURCE_SUFFIX):
        stem = PurePosixPath(file_path).stem
        if stem != decl.name:
            raise SourceSyntaxError(
                f"file name {stem!r} does not match class {decl.name!r}", 1, 1, file_path
            )
    return SourceUnit(file_path, decl)


# ---------------------------------------------------------------------------
# printing


def _format_literal(value: Literal) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_annotation(a: Annotation) -> str:
    if not a.args:
        return "@" + a.name
    inner = ", ".join(f"{k}={_format_literal(v)}" for k, v in a.args)
    return f"@{a.name}({inner})"


def _format_member(m: Member) -> Iterator[str]:
    for a in m.annotations:
        yield INDENT + format_annotation(a)
    if isinstance(m, FieldDecl):
        yield f"{INDENT}{m.type_ref} {m.name};"
        return
    params = ", ".join(f"{p.type_ref} {p.name}" for p in m.params)
    yield f"{INDENT}{m.return_type} {m.name}({params}) {{"
    for line in m.body_text.split("\n") if m.body_text else ():
        yield INDENT * 2 + line
    yield INDENT + "}"


def print_unit(unit: SourceUnit) -> str:
    """Render ``unit`` in canonical form (4-space indent, blank line between members)."""
    decl = unit.class_decl
    lines = [format_annotation(a) for a in decl.annotations]
    header = f"class {decl.name}"
    if decl.superclass:
        header += f" extends {decl.superclass}"
    lines.append(header + " {")
    for i, member in enumerate(decl.members):
        if i:
            lines.append("")
        lines.extend(_format_member(member))
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# repositories


class ClassListing(NamedTuple):
    name: str
    status: str  # "ok" | "syntax-error"
    path: str
    error: SourceSyntaxError | None = None


def iter_source_files(repo: str | os.PathLike) -> list[str]:
    """Repository-relative POSIX paths of every source file, sorted."""
    root = Path(repo)
    if not root.is_dir():
        raise OSError(f"not a readable directory: {root}")
    found = [p.relative_to(root).as_posix() for p in root.rglob("*" + SOURCE_SUFFIX) if p.is_file()]
    return sorted(found)


def read_unit(repo: str | os.PathLike, rel_path: str) -> SourceUnit:
    text = (Path(repo) / rel_path).read_text(encoding="utf-8")
    return parse_unit(text, rel_path)


def list_classes(repo: str | os.PathLike) -> list[ClassListing]:
    out = []
    for rel in iter_source_files(repo):
        try:
            unit = read_unit(repo, rel)
        except SourceSyntaxError as exc:
            out.append(ClassListing(PurePosixPath(rel).stem, "syntax-error", rel, exc))
        except UnicodeDecodeError as exc:
            err = SourceSyntaxError(f"not UTF-8: {exc.reason}", 1, 1, rel)
            out.append(ClassListing(PurePosixPath(rel).stem, "syntax-error", rel, err))
        else:
            out.append(ClassListing(unit.name, "ok", rel))
    return out
