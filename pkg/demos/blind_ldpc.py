"""Blind nonbinary LDPC reconciliation, one frame at a time.

Builds a q=8 code from the built-in table (slow the first time, about a
minute; pass a smaller n to speed it up) and shows how each failed decode
turns punctured padding into shortened symbols until Bob succeeds.

    python demos/blind_ldpc.py [qber] [n]
"""

import sys

from hdrecon.blind import key_length, run_blind, select_code
from hdrecon.channel import ChannelParams, sample_frame
from hdrecon.galois import gf_new
from hdrecon.harness import DEFAULT_CODE_MARGIN, code_for
from hdrecon.nbldpc import table_distributions

q = 8
p = float(sys.argv[1]) if len(sys.argv) > 1 else 0.09
n = int(sys.argv[2]) if len(sys.argv) > 2 else 4000

catalog = table_distributions(q)
choice = select_code(q, p, [(d.design_rate, d.det) for d in catalog], DEFAULT_CODE_MARGIN)
print(f"qber {p}: rate {choice.rate} code (DET {choice.det})")
H = code_for(catalog[choice.index], n, seed=1)
params = ChannelParams(p, q)
ctx = gf_new(q)

for k in range(5):
    fr = sample_frame(params, key_length(n), seed=[7, k, 0])
    out = run_blind(fr.x, fr.y, H, params, seed=[7, k, 1], ctx=ctx)
    steps = " ".join(str(it) for it in out.iterations)
    print(f"frame {k}: success={out.success} tries={out.tries} f={out.efficiency:.4f} "
          f"decoder iterations per try: {steps}")
