"""Exponential-sum length versus accuracy: L against (ln 1/eps)^2."""
import argparse
import math

from detsum.greens import build_expsum, length_cap


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--R", type=float, default=1e8)
    args = ap.parse_args()
    print("eps,L,cap,certificate,L_over_log2")
    for k in range(1, 11):
        eps = 10.0 ** -k
        es = build_expsum(eps, args.R)
        print(f"{eps:g},{es.L},{length_cap(eps)},{es.certificate:.2e},{es.L / math.log(eps) ** 2:.3f}")


if __name__ == "__main__":
    main()
