"""Assembles the toy core's test program into imem.sv and prints the
architectural state a reference interpreter reaches."""

import sys

PROGRAM = """
addi x1, x0, 5
addi x2, x0, 12
add x3, x1, x2
sub x4, x2, x1
and x5, x3, x4
or x6, x3, x4
xor x7, x6, x1
sw x3, 0(x0)
sw x7, 4(x0)
lw x5, 0(x0)
add x6, x5, x5
slli x7, x6, 2
srli x4, x7, 3
addi x1, x0, -8
srai x2, x1, 1
slt x3, x1, x0
sltu x4, x0, x1
slti x5, x1, -9
sltiu x6, x1, 3
lui x7, 0x12345
ori x7, x7, 0x678
xori x3, x7, -1
andi x4, x7, 0xff
beq x4, x4, 8
addi x1, x0, 99
bne x4, x0, 8
addi x1, x0, 98
addi x2, x0, 3
addi x5, x0, 0
add x5, x5, x2
addi x2, x2, -1
blt x0, x2, -8
sw x5, 8(x0)
bge x5, x2, 8
addi x5, x0, 1
bltu x2, x5, 8
addi x5, x0, 2
bgeu x2, x5, 8
jal x1, 8
addi x6, x0, 7
jalr x3, x1, 8
sll x4, x5, x2
srl x6, x7, x4
sra x7, x3, x4
sw x4, 12(x0)
sw x6, 16(x0)
lw x1, 4(x0)
sw x1, 20(x0)
auipc x2, 1
sw x2, 24(x0)
addi x1, x0, 7
addi x2, x0, 6
mul x3, x1, x2
lui x4, 0x80000
mulhu x5, x4, x1
addi x6, x0, 100
divu x7, x6, x1
remu x1, x6, x1
divu x2, x6, x0
add x4, x3, x7
sw x4, 28(x0)
sw x2, 0(x0)
addi x5, x0, 0x128
csrrw x0, 0x305, x5
csrrw x6, 0x340, x3
csrrs x7, 0x340, x1
csrrc x4, 0x340, x7
ecall
sw x4, 4(x0)
addi x0, x0, 0
addi x0, x0, 0
csrrs x1, 0xb02, x0
sw x1, 8(x0)
jal x0, 0
csrrs x4, 0x342, x0
csrrs x5, 0x341, x0
addi x5, x5, 4
csrrw x0, 0x341, x5
add x4, x4, x7
mret
"""

R = {"add": (0, 0), "sub": (0, 0x20), "sll": (1, 0), "slt": (2, 0), "sltu": (3, 0),
     "xor": (4, 0), "srl": (5, 0), "sra": (5, 0x20), "or": (6, 0), "and": (7, 0)}
I = {"addi": 0, "slti": 2, "sltiu": 3, "xori": 4, "ori": 6, "andi": 7}
SH = {"slli": (1, 0), "srli": (5, 0), "srai": (5, 0x20)}
B = {"beq": 0, "bne": 1, "blt": 4, "bge": 5, "bltu": 6, "bgeu": 7}
MD = {"mul": 0, "mulhu": 3, "divu": 5, "remu": 7}
CSR = {"csrrw": 1, "csrrs": 2, "csrrc": 3}
M = 0xFFFFFFFF


def reg(t):
    return int(t.strip().lstrip("x"))


def enc(line):
    if line == "ecall":
        return 0x00000073
    if line == "mret":
        return 0x30200073
    op, rest = line.split(None, 1)
    a = [t.strip() for t in rest.replace("(", ",").replace(")", "").split(",")]
    if op in R:
        f3, f7 = R[op]
        return (f7 << 25) | (reg(a[2]) << 20) | (reg(a[1]) << 15) | (f3 << 12) | (reg(a[0]) << 7) | 0x33
    if op in MD:
        return (1 << 25) | (reg(a[2]) << 20) | (reg(a[1]) << 15) | (MD[op] << 12) | (reg(a[0]) << 7) | 0x33
    if op in CSR:
        return (int(a[1], 0) << 20) | (reg(a[2]) << 15) | (CSR[op] << 12) | (reg(a[0]) << 7) | 0x73
    if op in I:
        imm = int(a[2], 0) & 0xFFF
        return (imm << 20) | (reg(a[1]) << 15) | (I[op] << 12) | (reg(a[0]) << 7) | 0x13
    if op in SH:
        f3, f7 = SH[op]
        return (f7 << 25) | (int(a[2], 0) << 20) | (reg(a[1]) << 15) | (f3 << 12) | (reg(a[0]) << 7) | 0x13
    if op == "lw":
        imm = int(a[1], 0) & 0xFFF
        return (imm << 20) | (reg(a[2]) << 15) | (2 << 12) | (reg(a[0]) << 7) | 0x03
    if op == "sw":
        imm = int(a[1], 0) & 0xFFF
        return ((imm >> 5) << 25) | (reg(a[0]) << 20) | (reg(a[2]) << 15) | (2 << 12) | ((imm & 31) << 7) | 0x23
    if op in B:
        imm = int(a[2], 0) & 0x1FFF
        return (((imm >> 12) & 1) << 31) | (((imm >> 5) & 63) << 25) | (reg(a[1]) << 20) | (reg(a[0]) << 15) \
            | (B[op] << 12) | (((imm >> 1) & 15) << 8) | (((imm >> 11) & 1) << 7) | 0x63
    if op == "lui":
        return ((int(a[1], 0) & 0xFFFFF) << 12) | (reg(a[0]) << 7) | 0x37
    if op == "auipc":
        return ((int(a[1], 0) & 0xFFFFF) << 12) | (reg(a[0]) << 7) | 0x17
    if op == "jal":
        imm = int(a[1], 0) & 0x1FFFFF
        return (((imm >> 20) & 1) << 31) | (((imm >> 1) & 0x3FF) << 21) | (((imm >> 11) & 1) << 20) \
            | (((imm >> 12) & 0xFF) << 12) | (reg(a[0]) << 7) | 0x6F
    if op == "jalr":
        imm = int(a[2], 0) & 0xFFF
        return (imm << 20) | (reg(a[1]) << 15) | (reg(a[0]) << 7) | 0x67
    raise ValueError(line)


def sx(v, bits):
    v &= (1 << bits) - 1
    return v - (1 << bits) if v >> (bits - 1) else v


def run(lines, steps=400):
    x = [0] * 8
    mem = {}
    pc = 0
    stores = []
    csr = {0x305: 0, 0x340: 0, 0x341: 0, 0x342: 0}
    retired = 0
    for _ in range(steps):
        line = lines[pc // 4]
        retired += 1
        if line == "ecall":
            csr[0x341], csr[0x342] = pc, 11
            pc = csr[0x305]
            continue
        if line == "mret":
            pc = csr[0x341]
            continue
        op, rest = line.split(None, 1)
        a = [t.strip() for t in rest.replace("(", ",").replace(")", "").split(",")]
        nxt = pc + 4
        s = lambda v: sx(v, 32)
        if op in R:
            p, q = x[reg(a[1])], x[reg(a[2])]
            v = {"add": lambda: p + q, "sub": lambda: p - q, "sll": lambda: p << (q & 31),
                 "slt": lambda: int(s(p) < s(q)), "sltu": lambda: int(p < q), "xor": lambda: p ^ q,
                 "srl": lambda: p >> (q & 31), "sra": lambda: s(p) >> (q & 31), "or": lambda: p | q,
                 "and": lambda: p & q}[op]()
            wr = (reg(a[0]), v)
        elif op in MD:
            p, q = x[reg(a[1])], x[reg(a[2])]
            v = {"mul": lambda: p * q, "mulhu": lambda: (p * q) >> 32,
                 "divu": lambda: p // q if q else M, "remu": lambda: p % q if q else p}[op]()
            wr = (reg(a[0]), v)
        elif op in CSR:
            addr = int(a[1], 0)
            # minstret as the pipeline reads it: the two instructions ahead
            # of the read are still in MEM and WB
            old = retired - 1 - 2 if addr == 0xB02 else csr[addr]
            src = x[reg(a[2])]
            if addr != 0xB02:
                csr[addr] = {"csrrw": src, "csrrs": old | src, "csrrc": old & ~src & M}[op]
            wr = (reg(a[0]), old)
        elif op in I or op in SH:
            p, imm = x[reg(a[1])], sx(int(a[2], 0), 12)
            v = {"addi": lambda: p + imm, "slti": lambda: int(s(p) < imm), "sltiu": lambda: int(p < (imm & M)),
                 "xori": lambda: p ^ imm, "ori": lambda: p | imm, "andi": lambda: p & imm,
                 "slli": lambda: p << imm, "srli": lambda: p >> imm, "srai": lambda: s(p) >> imm}[op]()
            wr = (reg(a[0]), v)
        elif op == "lw":
            wr = (reg(a[0]), mem.get((x[reg(a[2])] + int(a[1], 0)) & 31, 0))
        elif op == "sw":
            addr = (x[reg(a[2])] + int(a[1], 0)) & M
            mem[addr & 31] = x[reg(a[0])]
            stores.append((addr, x[reg(a[0])]))
            wr = None
        elif op in B:
            p, q = x[reg(a[0])], x[reg(a[1])]
            t = {"beq": p == q, "bne": p != q, "blt": s(p) < s(q), "bge": s(p) >= s(q), "bltu": p < q, "bgeu": p >= q}[op]
            if t:
                nxt = pc + int(a[2], 0)
            wr = None
        elif op == "lui":
            wr = (reg(a[0]), int(a[1], 0) << 12)
        elif op == "auipc":
            wr = (reg(a[0]), pc + (int(a[1], 0) << 12))
        elif op == "jal":
            wr = (reg(a[0]), pc + 4)
            nxt = pc + int(a[1], 0)
        elif op == "jalr":
            wr = (reg(a[0]), pc + 4)
            nxt = (x[reg(a[1])] + int(a[2], 0)) & ~1
        if wr and wr[0] != 0:
            x[wr[0]] = wr[1] & M
        if nxt == pc:
            break
        pc = nxt & M
    return x, stores


def main():
    lines = [l.strip() for l in PROGRAM.strip().splitlines()]
    out = ["module imem (", "  input  logic [31:0] addr,", "  output logic [31:0] rdata", ");",
           "  always_comb begin", "    case (addr[8:2])"]
    for i, l in enumerate(lines):
        out.append(f"      7'd{i}: rdata = 32'h{enc(l):08x}; // {l}")
    out += ["      default: rdata = 32'h00000013;", "    endcase", "  end", "endmodule", ""]
    path = sys.argv[1] if len(sys.argv) > 1 else "rtl/imem.sv"
    with open(path, "w") as f:
        f.write("\n".join(out))
    x, stores = run(lines)
    print("regs", [hex(v) for v in x])
    print("stores", [(hex(a), hex(v)) for a, v in stores])


if __name__ == "__main__":
    main()
