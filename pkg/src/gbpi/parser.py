"""Concrete syntax: lexer, parser, and desugaring.

The parser lowers all sugar while it parses (let, sequencing,
probabilistic choice `(+p)`, observe) and synthesizes simple types on
the way so that every binder in the core term carries an annotation.
Decimal literals become exact rationals.

Surface forms for densities: `pdf_normal(mu, sigma, e)` and
`pdf_uniform(a, b, e)` take their parameters as leading literal
arguments and lower to unary registry primitives, which is also what
`observe e from normal(mu, sigma)` expands to.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional

from gmpy2 import mpq

from .prims import UnknownPrimitive, is_known_primitive, registry_lookup
from .syntax import (
    REAL,
    App,
    Fix,
    IfLeqZero,
    Lambda,
    Lit,
    Prim,
    Sample,
    Score,
    SimpleType,
    TArrow,
    Term,
    TypeError_,
    Var,
    typecheck_simple,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


_DECIMAL_RE = re.compile(r"^[+-]?(\d+)(\.(\d+))?(/(\d+))?$")


def parse_decimal(s: str):
    """Exact rational from a decimal or fraction literal."""
    m = _DECIMAL_RE.match(s.strip())
    if not m:
        raise ValueError(f"bad numeric literal '{s}'")
    sign = -1 if s.strip().startswith("-") else 1
    whole, frac, denom = m.group(1), m.group(3), m.group(5)
    q = mpq(int(whole))
    if frac:
        q += mpq(int(frac), 10 ** len(frac))
    if denom:
        if frac:
            raise ValueError(f"bad numeric literal '{s}'")
        q = mpq(int(whole), int(denom))
    return sign * q


KEYWORDS = {
    "sample", "fun", "fix", "if", "then", "else", "score",
    "let", "in", "observe", "from", "R",
}

_DIST_FAMILIES = {"normal": "pdf_normal", "uniform": "pdf_uniform"}
_PDF_SURFACE = {"pdf_normal", "pdf_uniform"}


@dataclass
class Token:
    kind: str  # NUM IDENT KW SYM EOF
    text: str
    line: int
    col: int


def lex(src: str) -> List[Token]:
    toks: List[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def push(kind, text, l, c):
        toks.append(Token(kind, text, l, c))

    while i < n:
        ch = src[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        start_l, start_c = line, col
        if ch == "(" and i + 1 < n and src[i + 1] == "+":
            push("SYM", "(+", start_l, start_c)
            i += 2
            col += 2
            continue
        if src.startswith("->", i):
            push("SYM", "->", start_l, start_c)
            i += 2
            col += 2
            continue
        if src.startswith("<=", i):
            push("SYM", "<=", start_l, start_c)
            i += 2
            col += 2
            continue
        if ch in "(),;:=":
            push("SYM", ch, start_l, start_c)
            i += 1
            col += 1
            continue
        if ch.isdigit() or (
            ch == "-" and i + 1 < n and src[i + 1].isdigit()
        ):
            j = i + 1
            while j < n and (src[j].isdigit() or src[j] in "./"):
                j += 1
            push("NUM", src[i:j], start_l, start_c)
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            push("KW" if word in KEYWORDS else "IDENT", word, start_l, start_c)
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character '{ch}'", line, col)
    push("EOF", "", line, col)
    return toks


class Parser:
    def __init__(self, src: str):
        self.toks = lex(src)
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def err(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            raise ParseError(f"expected '{want}', found '{t.text or t.kind}'",
                             t.line, t.col)
        return self.next()

    # --- types ---

    def parse_type(self) -> SimpleType:
        left = self.parse_type_atom()
        if self.peek().text == "->":
            self.next()
            return TArrow(left, self.parse_type())
        return left

    def parse_type_atom(self) -> SimpleType:
        t = self.peek()
        if t.text == "R":
            self.next()
            return REAL
        if t.text == "(":
            self.next()
            ty = self.parse_type()
            self.expect("SYM", ")")
            return ty
        self.err("expected a type")

    # --- expressions (desugared and type-synthesized on the fly) ---

    def type_of(self, term: Term, env: dict, tok: Token) -> SimpleType:
        try:
            return typecheck_simple(term, env)
        except TypeError_ as e:
            raise ParseError(str(e), tok.line, tok.col)

    def parse_expr(self, env: dict) -> Term:
        t = self.peek()
        if t.kind == "KW" and t.text in ("fun", "fix", "if", "let", "observe"):
            left = self.parse_prefix(env)
            # only observe can leave a ';' pending: the other prefix forms
            # consume everything to their right
            if self.peek().text == ";":
                tok = self.next()
                right = self.parse_expr(env)
                lty = self.type_of(left, env, tok)
                return App(Lambda("_", lty, right), left)
            return left
        return self.parse_seq(env)

    def parse_prefix(self, env: dict) -> Term:
        t = self.next()
        if t.text == "fun":
            self.expect("SYM", "(")
            name = self.expect("IDENT").text
            self.expect("SYM", ":")
            ty = self.parse_type()
            self.expect("SYM", ")")
            self.expect("SYM", "->")
            body = self.parse_expr({**env, name: ty})
            return Lambda(name, ty, body)
        if t.text == "fix":
            fname = self.expect("IDENT").text
            self.expect("SYM", "(")
            pname = self.expect("IDENT").text
            self.expect("SYM", ":")
            dom = self.parse_type()
            self.expect("SYM", ")")
            self.expect("SYM", ":")
            # the codomain is an atom here so that the following '->' still
            # separates the annotation from the body; arrow codomains need parens
            cod = self.parse_type_atom()
            self.expect("SYM", "->")
            fty = TArrow(dom, cod)
            body = self.parse_expr({**env, fname: fty, pname: dom})
            got = self.type_of(body, {**env, fname: fty, pname: dom}, t)
            if got != cod:
                self.err(f"fix body has type {got!r}, annotation says {cod!r}", t)
            return Fix(fname, pname, fty, body)
        if t.text == "if":
            guard = self.parse_seq(env)
            self.expect("SYM", "<=")
            zero = self.expect("NUM")
            if parse_decimal(zero.text) != 0:
                self.err("conditional guards compare against 0", zero)
            self.expect("KW", "then")
            then = self.parse_expr(env)
            self.expect("KW", "else")
            orelse = self.parse_expr(env)
            return IfLeqZero(guard, then, orelse)
        if t.text == "let":
            name = self.expect("IDENT").text
            self.expect("SYM", "=")
            bound = self.parse_seq_or_prefix(env)
            bty = self.type_of(bound, env, t)
            self.expect("KW", "in")
            body = self.parse_expr({**env, name: bty})
            return App(Lambda(name, bty, body), bound)
        if t.text == "observe":
            value = self.parse_seq_or_prefix(env)
            self.expect("KW", "from")
            dist = self.next()
            if dist.text not in _DIST_FAMILIES:
                self.err(f"unknown distribution '{dist.text}'", dist)
            self.expect("SYM", "(")
            params = [parse_decimal(self.expect("NUM").text)]
            while self.peek().text == ",":
                self.next()
                params.append(parse_decimal(self.expect("NUM").text))
            self.expect("SYM", ")")
            prim_id = _canonical_pdf_id(_DIST_FAMILIES[dist.text], params, dist, self)
            return Score(Prim(prim_id, (value,)))
        raise AssertionError

    def parse_seq_or_prefix(self, env: dict) -> Term:
        t = self.peek()
        if t.kind == "KW" and t.text in ("fun", "fix", "if", "let", "observe"):
            left = self.parse_prefix(env)
            if self.peek().text == ";":
                tok = self.next()
                right = self.parse_seq_or_prefix(env)
                lty = self.type_of(left, env, tok)
                return App(Lambda("_", lty, right), left)
            return left
        return self.parse_seq(env)

    def parse_seq(self, env: dict) -> Term:
        left = self.parse_oplus(env)
        if self.peek().text == ";":
            tok = self.next()
            right = self.parse_expr(env)
            lty = self.type_of(left, env, tok)
            return App(Lambda("_", lty, right), left)
        return left

    def parse_oplus(self, env: dict) -> Term:
        left = self.parse_app(env)
        while self.peek().text == "(+":
            self.next()
            p = parse_decimal(self.expect("NUM").text)
            self.expect("SYM", ")")
            right = self.parse_oplus_operand(env)
            guard = Prim("sub", (Sample(), Lit(p)))
            left = IfLeqZero(guard, left, right)
        return left

    def parse_oplus_operand(self, env: dict) -> Term:
        t = self.peek()
        if t.kind == "KW" and t.text in ("fun", "fix", "if", "let", "observe"):
            return self.parse_prefix(env)
        return self.parse_app(env)

    def parse_app(self, env: dict) -> Term:
        term = self.parse_atom(env)
        while self.starts_atom():
            tok = self.peek()
            arg = self.parse_atom(env)
            fn_ty = self.type_of(term, env, tok)
            if not isinstance(fn_ty, TArrow):
                self.err(f"cannot apply a value of type {fn_ty!r}", tok)
            term = App(term, arg)
        return term

    def starts_atom(self) -> bool:
        t = self.peek()
        if t.kind in ("NUM", "IDENT"):
            return True
        if t.kind == "KW" and t.text in ("sample", "score"):
            return True
        return t.text == "("

    def parse_atom(self, env: dict) -> Term:
        t = self.next()
        if t.kind == "NUM":
            return Lit(parse_decimal(t.text))
        if t.kind == "KW" and t.text == "sample":
            return Sample()
        if t.kind == "KW" and t.text == "score":
            self.expect("SYM", "(")
            arg = self.parse_expr(env)
            self.expect("SYM", ")")
            return Score(arg)
        if t.text == "(":
            inner = self.parse_expr(env)
            self.expect("SYM", ")")
            return inner
        if t.kind == "IDENT":
            if self.peek().text == "(" and self._is_prim_name(t.text):
                return self.parse_prim_call(t, env)
            if t.text not in env:
                if self._is_prim_name(t.text):
                    self.err(f"primitive '{t.text}' must be applied to arguments", t)
                self.err(f"unbound identifier '{t.text}'", t)
            return Var(t.text)
        self.err(f"unexpected '{t.text or t.kind}'", t)

    @staticmethod
    def _is_prim_name(name: str) -> bool:
        return is_known_primitive(name) or name in _PDF_SURFACE

    def parse_prim_call(self, name_tok: Token, env: dict) -> Term:
        self.expect("SYM", "(")
        args = [self.parse_expr(env)]
        while self.peek().text == ",":
            self.next()
            args.append(self.parse_expr(env))
        self.expect("SYM", ")")
        name = name_tok.text
        if name in _PDF_SURFACE:
            if len(args) != 3:
                self.err(f"{name} takes (param, param, argument)", name_tok)
            params = []
            for a in args[:2]:
                if not isinstance(a, Lit):
                    self.err(f"{name} parameters must be literals", name_tok)
                params.append(a.value)
            prim_id = _canonical_pdf_id(name, params, name_tok, self)
            return Prim(prim_id, (args[2],))
        desc = registry_lookup(name)
        if len(args) != desc.arity:
            self.err(
                f"primitive '{name}' expects {desc.arity} args, got {len(args)}",
                name_tok,
            )
        return Prim(name, tuple(args))


def _canonical_pdf_id(family: str, params, tok: Token, parser: Parser) -> str:
    from .intervals import fmt_endpoint

    pid = f"{family}({','.join(fmt_endpoint(mpq(p)) for p in params)})"
    try:
        registry_lookup(pid)
    except UnknownPrimitive as e:
        parser.err(str(e), tok)
    return pid


def parse_program(source: str) -> Term:
    """Parse, desugar, and simple-type-check a closed program."""
    p = Parser(source)
    term = p.parse_expr({})
    tok = p.peek()
    if tok.kind != "EOF":
        p.err(f"trailing input '{tok.text}'", tok)
    typecheck_simple(term)  # sanity re-check on the core term
    return term
