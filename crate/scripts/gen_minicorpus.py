#!/usr/bin/env python3
"""Build the bundled x86-64/ARM mini-corpus.

Random C functions are compiled with clang for x86-64 (Intel syntax) and
ARMv7 at several optimization levels. Basic blocks are paired across the
two targets by (source file, optimization level, function, IR block name);
clang prints the IR block name next to every machine block when value names
are kept. Only names that occur exactly once per function on both sides are
paired.

Outputs (under crates/core/data/minicorpus/):
  train.jsonl          equivalent block pairs (raw instruction text)
  heldout.jsonl        labeled block pairs: held-out equivalent pairs (label 1)
                       plus the same number of mismatched pairs (label -1)
  instr_mono.tsv       labeled same-architecture instruction pairs
  instr_cross.tsv      labeled cross-architecture instruction pairs
  stats.json           record counts (read by the manifest step)

Usage: python3 scripts/gen_minicorpus.py [--seed 7] [--files 80]
"""

import argparse
import json
import os
import random
import re
import subprocess
import sys
import tempfile
from collections import Counter, defaultdict

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = os.path.join(ROOT, "crates", "core", "data", "minicorpus")

TARGETS = {
    "x86": ["--target=x86_64-unknown-linux-gnu", "-masm=intel"],
    "arm": ["--target=armv7-unknown-linux-gnueabihf", "-marm"],
}
COMMENT = {"x86": "#", "arm": "@"}
OPT_LEVELS = ["-O0", "-O1", "-O2"]

PRELUDE = """
typedef unsigned long size_t;
struct rec { int key; int len; short flags; char tag; int data[8]; struct rec *next; };
int printf(const char *, ...);
int puts(const char *);
void *memcpy(void *, const void *, size_t);
void *memset(void *, int, size_t);
size_t strlen(const char *);
int strcmp(const char *, const char *);
void *malloc(size_t);
void free(void *);
int ext_read(int);
int ext_write(int, int);
void ext_log(const char *, int);
int ext_check(struct rec *);
extern int g_counter;
extern int g_table[64];
extern const char *g_name;
"""

STRINGS = ['"value %d\\n"', '"error"', '"ok: %s"', '"%d,%d\\n"', '"done"', '"bad key"']


class Gen:
    def __init__(self, rng):
        self.rng = rng
        self.fid = 0

    def const(self):
        r = self.rng.random()
        if r < 0.45:
            return str(self.rng.randint(0, 16))
        if r < 0.7:
            return str(self.rng.randint(17, 4096))
        if r < 0.85:
            return "-" + str(self.rng.randint(1, 300))
        return hex(self.rng.randint(0x100, 0xFFFFF))

    def scalar(self, env):
        r = self.rng.random()
        if r < 0.55:
            return self.rng.choice(env["ints"])
        if r < 0.7 and env["ptr"]:
            return "%s[%s & 7]" % (env["ptr"], self.rng.choice(env["ints"]))
        if r < 0.8 and env["rec"]:
            return "%s->%s" % (env["rec"], self.rng.choice(["key", "len", "flags", "tag"]))
        if r < 0.88:
            return "g_table[%s & 63]" % self.rng.choice(env["ints"])
        if r < 0.93:
            return "g_counter"
        return self.const()

    def expr(self, env, depth=0):
        if depth > 1 or self.rng.random() < 0.35:
            return self.scalar(env)
        op = self.rng.choice(["+", "-", "*", "+", "-", "&", "|", "^", "<<", ">>", "/", "%"])
        rhs = self.expr(env, depth + 1)
        if op in ("/", "%"):
            rhs = "(%s | 1)" % rhs
        if op in ("<<", ">>"):
            rhs = "(%s & 15)" % rhs
        if self.rng.random() < 0.15:
            return "ext_read(%s %s %s)" % (self.expr(env, depth + 1), op, rhs)
        return "(%s %s %s)" % (self.expr(env, depth + 1), op, rhs)

    def cond(self, env):
        op = self.rng.choice(["<", ">", "<=", ">=", "==", "!="])
        c = "%s %s %s" % (self.scalar(env), op, self.rng.choice([self.const(), self.scalar(env)]))
        r = self.rng.random()
        if r < 0.15:
            c = "%s && %s %s %s" % (c, self.scalar(env), self.rng.choice(["<", "!="]), self.const())
        elif r < 0.25 and env["rec"]:
            c = "%s || %s->next == 0" % (c, env["rec"])
        return c

    def lvalue(self, env):
        r = self.rng.random()
        if r < 0.65:
            return self.rng.choice(env["ints"])
        if r < 0.8 and env["ptr"]:
            return "%s[%s & 7]" % (env["ptr"], self.rng.choice(env["ints"]))
        if r < 0.9 and env["rec"]:
            return "%s->%s" % (env["rec"], self.rng.choice(["key", "len", "data[2]"]))
        return "g_table[%s & 63]" % self.rng.choice(env["ints"])

    def stmt(self, env, depth, ind):
        pad = "    " * ind
        r = self.rng.random()
        if depth >= 3:
            r = self.rng.random() * 0.55
        if r < 0.35:
            aop = self.rng.choice(["=", "=", "+=", "-=", "^=", "|="])
            return "%s%s %s %s;\n" % (pad, self.lvalue(env), aop, self.expr(env))
        if r < 0.45:
            c = self.rng.random()
            if c < 0.3:
                return '%sprintf(%s, %s);\n' % (pad, self.rng.choice(STRINGS), self.expr(env))
            if c < 0.5:
                return "%sext_log(%s, %s);\n" % (pad, self.rng.choice(STRINGS + ["g_name"]), self.scalar(env))
            if c < 0.65 and env["ptr"]:
                return "%smemset(%s, %s, %s);\n" % (pad, env["ptr"], self.const(), self.rng.choice(["8", "32", "sizeof(int) * 4"]))
            if c < 0.8:
                return "%s%s = ext_write(%s, %s);\n" % (pad, self.rng.choice(env["ints"]), self.scalar(env), self.const())
            if env["rec"]:
                return "%sif (ext_check(%s)) %s = %s->next;\n" % (pad, env["rec"], env["rec"], env["rec"])
            return "%sg_counter += %s;\n" % (pad, self.scalar(env))
        if r < 0.55:
            return "%sg_counter++;\n" % pad
        if r < 0.72:
            s = "%sif (%s) {\n%s%s}" % (pad, self.cond(env), self.block(env, depth + 1, ind + 1), pad)
            if self.rng.random() < 0.5:
                s += " else {\n%s%s}" % (self.block(env, depth + 1, ind + 1), pad)
            return s + "\n"
        if r < 0.84:
            iv = "i%d" % depth
            env2 = dict(env)
            env2["ints"] = env["ints"] + [iv]
            return "%sfor (int %s = %s; %s < %s; %s++) {\n%s%s}\n" % (
                pad, iv, self.rng.choice(["0", "1", env["ints"][0]]), iv,
                self.rng.choice([self.scalar(env), self.const()]), iv,
                self.block(env2, depth + 1, ind + 1), pad)
        if r < 0.92:
            v = self.rng.choice(env["ints"])
            return "%swhile (%s > %s) {\n%s%s    %s = %s - %s;\n%s}\n" % (
                pad, v, self.const(), self.block(env, depth + 1, ind + 1), pad, v, v,
                self.rng.randint(1, 9), pad)
        if r < 0.97:
            s = "%sswitch (%s & 7) {\n" % (pad, self.scalar(env))
            for case in sorted(self.rng.sample(range(8), self.rng.randint(2, 5))):
                s += "%scase %d:\n%s%s    break;\n" % (pad, case, self.block(env, depth + 2, ind + 1), pad)
            s += "%sdefault:\n%s%s    break;\n%s}\n" % (pad, self.block(env, depth + 2, ind + 1), pad, pad)
            return s
        return "%sif (%s) return %s;\n" % (pad, self.cond(env), self.expr(env))

    def block(self, env, depth, ind):
        n = self.rng.randint(1, 4 if depth < 2 else 2)
        return "".join(self.stmt(env, depth, ind) for _ in range(n))

    def function(self):
        self.fid += 1
        name = "fn_%d" % self.fid
        params = ["int a", "int b"][: self.rng.randint(1, 2)]
        ints = [p.split()[1] for p in params]
        ptr = rec = None
        if self.rng.random() < 0.5:
            params.append("int *buf")
            ptr = "buf"
        if self.rng.random() < 0.4:
            params.append("struct rec *r")
            rec = "r"
        env = {"ints": ints + ["x", "y"], "ptr": ptr, "rec": rec}
        body = "    int x = %s;\n    int y = %s;\n" % (self.const(), self.scalar({"ints": ints, "ptr": ptr, "rec": rec}))
        body += self.block(env, 0, 1)
        body += "    return %s;\n" % self.expr(env)
        return "int %s(%s) {\n%s}\n" % (name, ", ".join(params), body)


BLOCK_RE = re.compile(r"^(?:\.LBB\d+_\d+:|[#@] %bb\.\d+:)\s*(?:[#@]\s*%([\w.]+))?")
FUNC_RE = re.compile(r"^([A-Za-z_]\w*):")


def parse_asm(text, arch):
    """Map (function, block name) -> list of instruction strings."""
    cmt = COMMENT[arch]
    blocks = defaultdict(list)
    counts = Counter()
    func = None
    cur = None
    for line in text.splitlines():
        m = FUNC_RE.match(line)
        if m:
            func = m.group(1)
            cur = None
            continue
        m = BLOCK_RE.match(line)
        if m:
            cur = (func, m.group(1)) if m.group(1) else None
            if cur:
                counts[cur] += 1
            continue
        if line.startswith(".Lfunc_end"):
            cur = None
            continue
        if not line.startswith("\t"):
            continue
        body = line.strip()
        if not body or body.startswith(".") or body.startswith(cmt):
            continue
        if cmt in body:
            body = body.split(cmt, 1)[0].rstrip()
        if cur and body:
            blocks[cur].append(re.sub(r"\s+", " ", body.replace("\t", " ")).strip())
    return {k: v for k, v in blocks.items() if counts[k] == 1 and v}


def compile_c(src_path, arch, opt):
    cmd = ["clang", "-S", "-o", "-", opt, "-fno-discard-value-names", "-fno-asynchronous-unwind-tables",
           "-fno-stack-protector", "-w"] + TARGETS[arch] + [src_path]
    return subprocess.run(cmd, check=True, capture_output=True, text=True).stdout


def opcode(ins):
    return ins.split()[0].lower()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--files", type=int, default=80)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    gen = Gen(rng)
    pairs = []
    with tempfile.TemporaryDirectory() as tmp:
        for fi in range(args.files):
            src = PRELUDE + "\n".join(gen.function() for _ in range(3))
            path = os.path.join(tmp, "f%03d.c" % fi)
            with open(path, "w") as fh:
                fh.write(src)
            for opt in OPT_LEVELS:
                x86 = parse_asm(compile_c(path, "x86", opt), "x86")
                arm = parse_asm(compile_c(path, "arm", opt), "arm")
                for key in sorted(set(x86) & set(arm)):
                    pid = "f%03d%s:%s:%s" % (fi, opt, key[0], key[1])
                    pairs.append({"id": pid,
                                  "a": {"arch": "x86", "ins": x86[key]},
                                  "b": {"arch": "arm", "ins": arm[key]},
                                  "normalized": False})
    rng.shuffle(pairs)
    n_held = len(pairs) // 10
    held, train = pairs[:n_held], pairs[n_held:]
    os.makedirs(OUT, exist_ok=True)
    with open(os.path.join(OUT, "train.jsonl"), "w") as fh:
        for p in train:
            fh.write(json.dumps(p) + "\n")
    labeled = []
    for p in held:
        q = dict(p)
        q["label"] = 1
        labeled.append(q)
    for i, p in enumerate(held):
        # Mismatched ARM side: any held-out block other than the true partner.
        j = (i + rng.randint(1, len(held) - 1)) % len(held)
        labeled.append({"id": "neg%04d" % i, "a": p["a"], "b": held[j]["b"],
                        "normalized": False, "label": -1})
    with open(os.path.join(OUT, "heldout.jsonl"), "w") as fh:
        for p in labeled:
            fh.write(json.dumps(p) + "\n")

    # Instruction pairs drawn from the training side.
    by_arch = defaultdict(list)
    for p in train:
        for side in ("a", "b"):
            by_arch[p[side]["arch"]].extend(p[side]["ins"])
    for arch in by_arch:
        by_arch[arch] = sorted(set(by_arch[arch]))

    def pick_pairs(xs, ys, similar, want, arch_x, arch_y):
        out = set()
        tries = 0
        while len(out) < want and tries < 200000:
            tries += 1
            a, b = rng.choice(xs), rng.choice(ys)
            if a == b:
                continue
            if similar(opcode(a), opcode(b)):
                out.add((arch_x, a, arch_y, b, 1))
        pos = sorted(out)
        out = set()
        while len(out) < want:
            a, b = rng.choice(xs), rng.choice(ys)
            if not similar(opcode(a), opcode(b)) and not exception(opcode(a), opcode(b)):
                out.add((arch_x, a, arch_y, b, -1))
        return pos + sorted(out)

    exceptions = [("cmp", "test")]

    def exception(x, y):
        return (x, y) in exceptions or (y, x) in exceptions

    mono = []
    for arch in ("arm", "x86"):
        mono += pick_pairs(by_arch[arch], by_arch[arch], lambda x, y: x == y, 50, arch, arch)
    with open(os.path.join(OUT, "instr_mono.tsv"), "w") as fh:
        for row in mono:
            fh.write("\t".join(map(str, row)) + "\n")

    cross_classes = [
        ({"mov", "movl", "movq"}, {"mov", "movw", "movt", "ldr", "str"}),
        ({"add", "lea", "inc"}, {"add"}),
        ({"sub", "dec"}, {"sub", "rsb"}),
        ({"imul", "mul"}, {"mul", "mla", "smull", "umull"}),
        ({"cmp", "test"}, {"cmp", "tst"}),
        ({"call"}, {"bl", "blx"}),
        ({"jmp"}, {"b"}),
        ({"je"}, {"beq"}),
        ({"jne"}, {"bne"}),
        ({"jl"}, {"blt"}),
        ({"jg"}, {"bgt"}),
        ({"jle"}, {"ble"}),
        ({"jge"}, {"bge"}),
        ({"and"}, {"and", "bic"}),
        ({"or"}, {"orr"}),
        ({"xor"}, {"eor"}),
        ({"shl", "sal"}, {"lsl"}),
        ({"shr", "sar"}, {"lsr", "asr"}),
        ({"push"}, {"push"}),
        ({"pop"}, {"pop"}),
        ({"ret"}, {"bx"}),
        ({"movzx", "movsx", "movsxd"}, {"ldrb", "ldrh", "ldrsb", "ldrsh", "sxth", "sxtb", "uxtb", "uxth"}),
    ]

    def cross_similar(ox, oa):
        return any(ox in xs and oa in as_ for xs, as_ in cross_classes)

    cross = pick_pairs(by_arch["x86"], by_arch["arm"], cross_similar, 50, "x86", "arm")
    with open(os.path.join(OUT, "instr_cross.tsv"), "w") as fh:
        for row in cross:
            fh.write("\t".join(map(str, row)) + "\n")
    with open(os.path.join(OUT, "label_exceptions.tsv"), "w") as fh:
        fh.write("# opcode pairs treated as neither similar nor dissimilar in mono labels\n")
        for x, y in exceptions:
            fh.write("x86\t%s\t%s\n" % (x, y))
    with open(os.path.join(OUT, "opcode_classes.tsv"), "w") as fh:
        fh.write("# x86 opcodes <TAB> arm opcodes considered similar for cross labels\n")
        for xs, as_ in cross_classes:
            fh.write("%s\t%s\n" % (",".join(sorted(xs)), ",".join(sorted(as_))))
    stats = {"train_pairs": len(train), "heldout_records": len(labeled),
             "heldout_positive": len(held), "heldout_negative": len(held),
             "instr_mono_pairs": len(mono), "instr_cross_pairs": len(cross)}
    with open(os.path.join(OUT, "stats.json"), "w") as fh:
        json.dump(stats, fh, indent=2)
        fh.write("\n")
    print(json.dumps(stats), file=sys.stderr)


if __name__ == "__main__":
    main()
