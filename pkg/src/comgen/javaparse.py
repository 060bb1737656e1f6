"""Parse single Java methods far enough to extract call sites and a
flattenable AST.

The grammar is deliberately partial: statements that do not fit (lambdas,
try/catch, switch, method references, ...) are swallowed into ``other``
nodes wrapping their token span, so any brace-balanced method parses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from comgen.javalex import Token, code_tokens

PRIMITIVES = frozenset({"boolean", "byte", "char", "double", "float",
                        "int", "long", "short", "void", "var"})
MODIFIERS = frozenset({"public", "protected", "private", "static", "final",
                       "abstract", "synchronized", "native", "strictfp",
                       "default", "transient", "volatile"})
LITERAL_KINDS = frozenset({"number", "string", "char"})

KINDS = ("method", "param", "block", "if", "for", "while", "return",
         "assign", "call", "name", "literal", "binop", "other")

# structural markers used by flatten; labels colliding with them get escaped
_OPEN, _CLOSE = "(", ")"
_ESCAPES = {"(": "-lrb-", ")": "-rrb-"}
_UNESCAPES = {v: k for k, v in _ESCAPES.items()}


class ParseError(ValueError):
    def __init__(self, message, offset=-1):
        super().__init__(f"{message} (offset {offset})" if offset >= 0 else message)
        self.offset = offset


@dataclass
class AstNode:
    kind: str
    label: str = ""
    children: list["AstNode"] = field(default_factory=list)
    pos: int = field(default=-1, compare=False)

    def walk(self):
        """Pre-order traversal."""
        yield self
        for c in self.children:
            yield from c.walk()


@dataclass(frozen=True)
class ApiCall:
    name: str
    arity: int
    position: int = -1


@dataclass
class ParseResult:
    ast: AstNode
    recovered: int  # number of statement spans swallowed into `other`


def _leaf(tok: Token) -> AstNode:
    if tok.kind == "identifier":
        return AstNode("name", tok.text, pos=tok.offset)
    if tok.kind in LITERAL_KINDS or tok.text in ("true", "false", "null"):
        return AstNode("literal", tok.text, pos=tok.offset)
    return AstNode("other", tok.text, pos=tok.offset)


_BIN_LEVELS = [
    ("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="),
    ("<", ">", "<=", ">=", "instanceof"), ("<<", ">>", ">>>"),
    ("+", "-"), ("*", "/", "%"),
]
_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
               "<<=", ">>=", ">>>="}
_UNARY_OPS = {"!", "~", "+", "-", "++", "--"}


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.recovered = 0

    def peek(self, k=0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, *texts):
        t = self.peek()
        return t is not None and t.text in texts

    def advance(self):
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of input",
                             self.toks[-1].offset if self.toks else 0)
        self.i += 1
        return t

    def expect(self, text):
        t = self.peek()
        if t is None or t.text != text:
            off = t.offset if t else (self.toks[-1].offset if self.toks else 0)
            raise ParseError(f"expected {text!r}", off)
        return self.advance()

    # ------------------------------------------------------------ signature

    def skip_annotations_and_modifiers(self):
        while True:
            t = self.peek()
            if t is None:
                return
            if t.text == "@":
                self.advance()
                if self.peek() and self.peek().kind in ("identifier", "keyword"):
                    self.advance()
                if self.at("("):
                    self.skip_balanced("(", ")")
                continue
            if t.text in MODIFIERS:
                self.advance()
                continue
            return

    def skip_balanced(self, open_t, close_t):
        self.expect(open_t)
        depth = 1
        while depth > 0:
            t = self.advance()
            if t.text == open_t:
                depth += 1
            elif t.text == close_t:
                depth -= 1

    def skip_type_params(self):
        if self.at("<"):
            depth = 0
            while True:
                t = self.advance()
                if t.text == "<":
                    depth += 1
                elif t.text == ">":
                    depth -= 1
                    if depth == 0:
                        return
                elif t.text == ">>":
                    depth -= 2
                    if depth <= 0:
                        return

    def try_type(self):
        """Parse a type reference; returns its text or None (cursor restored)."""
        save = self.i
        t = self.peek()
        if t is None:
            return None
        parts = []
        if t.text in PRIMITIVES:
            parts.append(self.advance().text)
        elif t.kind == "identifier":
            parts.append(self.advance().text)
            while self.at(".") and self.peek(1) and self.peek(1).kind == "identifier":
                self.advance()
                parts.append("." + self.advance().text)
        else:
            self.i = save
            return None
        if self.at("<"):
            depth, buf = 0, []
            j = self.i
            ok = False
            while j < len(self.toks):
                text = self.toks[j].text
                kind = self.toks[j].kind
                if text == "<":
                    depth += 1
                elif text == ">":
                    depth -= 1
                elif text == ">>":
                    depth -= 2
                elif text == ">>>":
                    depth -= 3
                elif text not in (",", ".", "?", "[", "]", "extends", "super") \
                        and kind not in ("identifier", "keyword"):
                    break
                buf.append(text)
                j += 1
                if depth <= 0:
                    ok = True
                    break
            if ok:
                self.i = j
                parts.append("".join(buf))
            else:
                self.i = save
                return None
        while self.at("[") and self.peek(1) and self.peek(1).text == "]":
            self.advance()
            self.advance()
            parts.append("[]")
        return "".join(parts)

    def parse_params(self):
        self.expect("(")
        params = []
        while not self.at(")"):
            start = self.i
            self.skip_annotations_and_modifiers()
            type_text = self.try_type()
            if self.at("..."):
                self.advance()
                type_text = (type_text or "") + "..."
            name_tok = self.peek()
            if type_text and name_tok is not None and name_tok.kind == "identifier":
                self.advance()
                while self.at("[") and self.peek(1) and self.peek(1).text == "]":
                    self.advance()
                    self.advance()
                params.append(AstNode("param", children=[
                    AstNode("name", type_text),
                    AstNode("name", name_tok.text, pos=name_tok.offset)]))
            else:
                # unparseable parameter: swallow to , or )
                self.i = start
                span = []
                depth = 0
                while self.peek() is not None:
                    t = self.peek()
                    if depth == 0 and t.text in (",", ")"):
                        break
                    if t.text in "([":
                        depth += 1
                    elif t.text in ")]":
                        depth -= 1
                    span.append(self.advance())
                params.append(AstNode("param", children=[
                    AstNode("other", children=[_leaf(t) for t in span])]))
            if self.at(","):
                self.advance()
        self.expect(")")
        return params

    # ------------------------------------------------------------ statements

    def parse_block(self):
        open_tok = self.expect("{")
        node = AstNode("block", pos=open_tok.offset)
        while not self.at("}"):
            if self.peek() is None:
                raise ParseError("unterminated block", open_tok.offset)
            node.children.append(self.parse_statement())
        self.expect("}")
        return node

    def parse_statement(self):
        start = self.i
        try:
            return self._statement_inner()
        except ParseError:
            self.i = start
            return self._recover_statement()

    def _statement_inner(self):
        t = self.peek()
        if t is None:
            raise ParseError("expected statement")
        if t.text == "{":
            return self.parse_block()
        if t.text == ";":
            self.advance()
            return AstNode("other", ";", pos=t.offset)
        if t.text == "if":
            self.advance()
            self.expect("(")
            cond = self.parse_expression()
            self.expect(")")
            then = self.parse_statement()
            node = AstNode("if", children=[cond, then], pos=t.offset)
            if self.at("else"):
                self.advance()
                node.children.append(self.parse_statement())
            return node
        if t.text == "while":
            self.advance()
            self.expect("(")
            cond = self.parse_expression()
            self.expect(")")
            return AstNode("while", children=[cond, self.parse_statement()],
                           pos=t.offset)
        if t.text == "for":
            return self._parse_for(t)
        if t.text == "return":
            self.advance()
            node = AstNode("return", pos=t.offset)
            if not self.at(";"):
                node.children.append(self.parse_expression())
            self.expect(";")
            return node
        if t.text == "throw":
            self.advance()
            node = AstNode("other", "throw", [self.parse_expression()], pos=t.offset)
            self.expect(";")
            return node
        if t.text in ("break", "continue"):
            self.advance()
            label = ""
            if self.peek() and self.peek().kind == "identifier":
                label = self.advance().text
            self.expect(";")
            return AstNode("other", t.text + (" " + label if label else ""),
                           pos=t.offset)
        if t.text == "do":
            self.advance()
            body = self.parse_statement()
            self.expect("while")
            self.expect("(")
            cond = self.parse_expression()
            self.expect(")")
            self.expect(";")
            return AstNode("other", "do", [body, cond], pos=t.offset)
        decl = self._try_declaration()
        if decl is not None:
            return decl
        expr = self.parse_expression()
        self.expect(";")
        return expr

    def _parse_for(self, t):
        self.advance()
        self.expect("(")
        # enhanced for: Type name : expr
        save = self.i
        self.skip_annotations_and_modifiers()
        type_text = self.try_type()
        if type_text and self.peek() and self.peek().kind == "identifier" \
                and self.peek(1) and self.peek(1).text == ":":
            name_tok = self.advance()
            self.advance()  # ':'
            iterable = self.parse_expression()
            self.expect(")")
            each = AstNode("other", ":", [AstNode("name", type_text),
                                          AstNode("name", name_tok.text,
                                                  pos=name_tok.offset),
                                          iterable])
            return AstNode("for", children=[each, self.parse_statement()],
                           pos=t.offset)
        self.i = save
        node = AstNode("for", pos=t.offset)
        if not self.at(";"):
            init = self._try_declaration(terminated=False)
            node.children.append(init if init is not None
                                 else self.parse_expression())
        self.expect(";")
        if not self.at(";"):
            node.children.append(self.parse_expression())
        self.expect(";")
        if not self.at(")"):
            node.children.append(self.parse_expression())
        self.expect(")")
        node.children.append(self.parse_statement())
        return node

    def _try_declaration(self, terminated=True):
        """Local variable declaration, or None with the cursor restored."""
        save = self.i
        t = self.peek()
        if t is not None and t.text == "final":
            self.advance()
        type_text = self.try_type()
        name_tok = self.peek()
        if type_text is None or name_tok is None or name_tok.kind != "identifier":
            self.i = save
            return None
        nxt = self.peek(1)
        if nxt is None or nxt.text not in ("=", ";", ",", ")"):
            self.i = save
            return None
        declarators = []
        try:
            while True:
                name_tok = self.peek()
                if name_tok is None or name_tok.kind != "identifier":
                    raise ParseError("expected declarator name",
                                     name_tok.offset if name_tok else -1)
                self.advance()
                if self.at("="):
                    self.advance()
                    init = self.parse_expression()
                    declarators.append(AstNode(
                        "assign", "=",
                        [AstNode("name", name_tok.text, pos=name_tok.offset), init],
                        pos=name_tok.offset))
                else:
                    declarators.append(AstNode(
                        "other", "decl",
                        [AstNode("name", type_text),
                         AstNode("name", name_tok.text, pos=name_tok.offset)],
                        pos=name_tok.offset))
                if self.at(","):
                    self.advance()
                    continue
                break
            if terminated:
                self.expect(";")
        except ParseError:
            self.i = save
            return None
        if len(declarators) == 1:
            return declarators[0]
        return AstNode("other", "decl-list", declarators)

    def _recover_statement(self):
        """Swallow one unparseable statement into an `other` node."""
        self.recovered += 1
        span = []
        depth = 0
        start = self.peek()
        while self.peek() is not None:
            t = self.peek()
            if depth == 0 and t.text == "}":
                break
            span.append(self.advance())
            if t.text in "({[":
                depth += 1
            elif t.text in ")}]":
                depth -= 1
                if depth == 0 and t.text == "}":
                    break
            elif t.text == ";" and depth == 0:
                break
        if not span:  # stuck on a closing brace: emit it to guarantee progress
            span.append(self.advance())
        return AstNode("other", "stmt", [_leaf(t) for t in span],
                       pos=start.offset if start else -1)

    # ------------------------------------------------------------ expressions

    def parse_expression(self):
        lhs = self._parse_ternary()
        if self.at(*_ASSIGN_OPS):
            op = self.advance()
            rhs = self.parse_expression()
            return AstNode("assign", op.text, [lhs, rhs], pos=op.offset)
        return lhs

    def _parse_ternary(self):
        cond = self._parse_binary(0)
        if self.at("?"):
            self.advance()
            a = self.parse_expression()
            self.expect(":")
            b = self._parse_ternary()
            return AstNode("other", "?:", [cond, a, b])
        return cond

    def _parse_binary(self, level):
        if level >= len(_BIN_LEVELS):
            return self._parse_unary()
        ops = _BIN_LEVELS[level]
        node = self._parse_binary(level + 1)
        while self.at(*ops):
            op = self.advance()
            if op.text == "instanceof":
                type_text = self.try_type()
                if type_text is None:
                    raise ParseError("expected type after instanceof", op.offset)
                rhs = AstNode("name", type_text)
            else:
                rhs = self._parse_binary(level + 1)
            node = AstNode("binop", op.text, [node, rhs], pos=op.offset)
        return node

    def _parse_unary(self):
        t = self.peek()
        if t is not None and t.text in _UNARY_OPS:
            self.advance()
            return AstNode("other", t.text, [self._parse_unary()], pos=t.offset)
        if t is not None and t.text == "(" and self._looks_like_cast():
            self.advance()
            type_text = self.try_type()
            self.expect(")")
            return AstNode("other", "cast",
                           [AstNode("name", type_text), self._parse_unary()],
                           pos=t.offset)
        return self._parse_postfix()

    def _looks_like_cast(self):
        save = self.i
        try:
            self.advance()  # '('
            type_text = self.try_type()
            if type_text is None or not self.at(")"):
                return False
            nxt = self.peek(1)
            if nxt is None:
                return False
            if type_text.rstrip("[]") in PRIMITIVES:
                return True
            return (nxt.kind in ("identifier", "number", "string", "char")
                    or nxt.text in ("(", "!", "~", "new", "this", "super"))
        finally:
            self.i = save

    def _parse_postfix(self):
        node = self._parse_primary()
        while True:
            if self.at("."):
                dot = self.advance()
                member = self.peek()
                if member is None:
                    raise ParseError("dangling '.'", dot.offset)
                self.advance()
                if member.kind == "identifier" and self.at("("):
                    args = self._parse_args()
                    call = AstNode("call",
                                   children=[AstNode("name", member.text,
                                                     pos=member.offset)] + args,
                                   pos=member.offset)
                    node = AstNode("other", ".", [node, call], pos=dot.offset)
                elif member.kind == "identifier":
                    node = AstNode("other", ".",
                                   [node, AstNode("name", member.text,
                                                  pos=member.offset)],
                                   pos=dot.offset)
                else:
                    node = AstNode("other", ".",
                                   [node, _leaf(member)], pos=dot.offset)
                continue
            if self.at("(") and node.kind == "name" and not node.children \
                    and node.label not in ("this", "super"):
                args = self._parse_args()
                node = AstNode("call",
                               children=[AstNode("name", node.label,
                                                 pos=node.pos)] + args,
                               pos=node.pos)
                continue
            if self.at("["):
                self.advance()
                idx = self.parse_expression()
                self.expect("]")
                node = AstNode("other", "[]", [node, idx])
                continue
            if self.at("++", "--"):
                op = self.advance()
                node = AstNode("other", "post" + op.text, [node], pos=op.offset)
                continue
            return node

    def _parse_args(self):
        self.expect("(")
        args = []
        while not self.at(")"):
            args.append(self.parse_expression())
            if self.at(","):
                self.advance()
            elif not self.at(")"):
                raise ParseError("expected ',' or ')' in arguments",
                                 self.peek().offset if self.peek() else -1)
        self.expect(")")
        return args

    def _parse_primary(self):
        t = self.peek()
        if t is None:
            raise ParseError("expected expression")
        if t.kind in LITERAL_KINDS or t.text in ("true", "false", "null"):
            self.advance()
            return AstNode("literal", t.text, pos=t.offset)
        if t.text == "new":
            self.advance()
            type_text = self.try_type()
            if type_text is None:
                raise ParseError("expected type after new", t.offset)
            if self.at("("):
                args = self._parse_args()
                return AstNode("other", "new",
                               [AstNode("name", type_text)] + args, pos=t.offset)
            if self.at("["):
                dims = []
                while self.at("["):
                    self.advance()
                    if not self.at("]"):
                        dims.append(self.parse_expression())
                    self.expect("]")
                return AstNode("other", "new[]",
                               [AstNode("name", type_text)] + dims, pos=t.offset)
            raise ParseError("malformed new expression", t.offset)
        if t.text in ("this", "super"):
            self.advance()
            if self.at("("):
                args = self._parse_args()
                return AstNode("other", t.text + "()", args, pos=t.offset)
            return AstNode("name", t.text, pos=t.offset)
        if t.kind == "identifier":
            self.advance()
            return AstNode("name", t.text, pos=t.offset)
        if t.text == "(":
            self.advance()
            inner = self.parse_expression()
            self.expect(")")
            return inner
        if t.text == "{":
            self.advance()
            elems = []
            while not self.at("}"):
                elems.append(self.parse_expression())
                if self.at(","):
                    self.advance()
            self.expect("}")
            return AstNode("other", "arrayinit", elems, pos=t.offset)
        raise ParseError(f"unexpected token {t.text!r}", t.offset)


def _check_balanced(tokens):
    stack = []
    pairs = {")": "(", "}": "{", "]": "["}
    for t in tokens:
        if t.text in "({[":
            stack.append(t)
        elif t.text in ")}]":
            if not stack or stack[-1].text != pairs[t.text]:
                raise ParseError(f"unbalanced {t.text!r}", t.offset)
            stack.pop()
    if stack:
        raise ParseError(f"unclosed {stack[-1].text!r}", stack[-1].offset)


def parse_method_result(source: str) -> ParseResult:
    tokens = code_tokens(source)
    if not tokens:
        raise ParseError("empty input", 0)
    _check_balanced(tokens)
    p = _Parser(tokens)
    p.skip_annotations_and_modifiers()
    p.skip_type_params()
    # scan ahead for the method name: the identifier right before the first '('
    j = p.i
    name_idx = None
    while j < len(p.toks):
        if p.toks[j].text == "(":
            name_idx = j - 1
            break
        j += 1
    if name_idx is None or name_idx < p.i \
            or p.toks[name_idx].kind != "identifier":
        raise ParseError("no method signature found",
                         tokens[0].offset)
    name_tok = p.toks[name_idx]
    is_ctor = name_idx == p.i
    p.i = name_idx + 1
    node = AstNode("method", "constructor" if is_ctor else "",
                   pos=name_tok.offset)
    node.children.append(AstNode("name", name_tok.text, pos=name_tok.offset))
    node.children.extend(p.parse_params())
    while p.peek() is not None and not p.at("{", ";"):
        p.advance()  # throws clause
    if p.at("{"):
        node.children.append(p.parse_block())
    elif p.at(";"):
        p.advance()
    return ParseResult(node, p.recovered)


def parse_method(source: str) -> AstNode:
    """Parse one Java method declaration into an AstNode tree."""
    return parse_method_result(source).ast


def method_signature_info(source: str):
    """(method name, is_constructor) from the signature, or (None, False)."""
    try:
        tokens = code_tokens(source)
        p = _Parser(tokens)
        p.skip_annotations_and_modifiers()
        p.skip_type_params()
        j = p.i
        while j < len(tokens) and tokens[j].text != "(":
            j += 1
        if j == 0 or j >= len(tokens) or tokens[j - 1].kind != "identifier":
            return None, False
        return tokens[j - 1].text, (j - 1 == p.i)
    except (ParseError, ValueError):
        return None, False


def extract_api_calls(ast: AstNode) -> list[ApiCall]:
    """All call sites in pre-order (first textual occurrence, repeats kept)."""
    calls = []
    for node in ast.walk():
        if node.kind == "call":
            callee = node.children[0]
            calls.append(ApiCall(callee.label, len(node.children) - 1,
                                 callee.pos))
    return calls


def flatten_ast(ast: AstNode, max_len: int = 512) -> list[str]:
    """Bracketed pre-order linearization; truncation keeps brackets balanced."""
    out = []

    def emit(node):
        out.append(_OPEN)
        out.append(node.kind)
        if node.label:
            out.append(_ESCAPES.get(node.label, node.label))
        for c in node.children:
            emit(c)
        out.append(_CLOSE)

    emit(ast)
    if len(out) <= max_len:
        return out
    depth = 0
    cut = 0
    for i, tok in enumerate(out):
        new_depth = depth + (1 if tok == _OPEN else (-1 if tok == _CLOSE else 0))
        if i + 1 + new_depth > max_len:
            break
        depth = new_depth
        cut = i + 1
    return out[:cut] + [_CLOSE] * depth


def rebuild_ast(tokens: list[str]) -> AstNode:
    """Inverse of flatten_ast for untruncated sequences."""
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != _OPEN:
            raise ParseError(f"expected '(' at flat position {pos}")
        pos += 1
        if pos >= len(tokens):
            raise ParseError("truncated flat sequence")
        kind = tokens[pos]
        pos += 1
        node = AstNode(kind)
        if pos < len(tokens) and tokens[pos] not in (_OPEN, _CLOSE):
            node.label = _UNESCAPES.get(tokens[pos], tokens[pos])
            pos += 1
        while pos < len(tokens) and tokens[pos] == _OPEN:
            node.children.append(parse())
        if pos >= len(tokens) or tokens[pos] != _CLOSE:
            raise ParseError(f"expected ')' at flat position {pos}")
        pos += 1
        return node

    node = parse()
    if pos != len(tokens):
        raise ParseError(f"trailing tokens after flat position {pos}")
    return node
