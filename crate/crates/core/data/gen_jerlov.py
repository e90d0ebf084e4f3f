"""Regenerates the bundled Jerlov water-type tables in data/jerlov/.

Each table is built from a three-component bio-optical model:

    a(l) = a_w(l) + 0.06 * Chl^0.65 * a_ph_shape(l) + a_g(440) * exp(-0.014 (l - 440))
    b(l) = 0.0029 * (500 / l)^4.32 + b_p(550) * (550 / l)^eta

a_w is the pure-water absorption of Pope & Fry (1997), a_ph_shape the
normalized phytoplankton absorption shape of Prieur & Sathyendranath (1981).
The per-type chlorophyll, CDOM and particle parameters are chosen to land
near the Jerlov IOP tabulation of Solonenko & Mobley (2015, Appl. Opt. 54).
The result is an approximation of those tables, good to roughly the second
decimal, not a transcription.

Usage: python3 gen_jerlov.py   (writes next to this script)
"""

import math
import os

WL = [400, 425, 450, 475, 500, 525, 550, 575, 600, 625, 650, 675, 700]
A_WATER = [0.00663, 0.00478, 0.00922, 0.0114, 0.0204, 0.0477, 0.0565,
           0.0894, 0.2224, 0.2834, 0.3400, 0.4245, 0.6240]
A_PH_SHAPE = [0.687, 0.924, 0.996, 0.862, 0.628, 0.405, 0.236, 0.163,
              0.133, 0.132, 0.179, 0.436, 0.067]

# id: (Chl mg/m^3, a_g(440) 1/m, b_p(550) 1/m, particle scattering slope)
TYPES = {
    "JI":   (0.02, 0.005, 0.010, 1.0),
    "JIA":  (0.08, 0.012, 0.030, 1.0),
    "JIB":  (0.20, 0.025, 0.070, 1.0),
    "JII":  (0.60, 0.060, 0.180, 0.9),
    "JIII": (1.80, 0.150, 0.450, 0.8),
    "J1C":  (1.00, 0.170, 0.400, 0.7),
    "J3C":  (2.00, 0.270, 0.700, 0.6),
    "J5C":  (3.00, 0.430, 1.000, 0.5),
    "J7C":  (5.00, 0.730, 1.500, 0.4),
    "J9C":  (8.00, 1.100, 2.000, 0.3),
}


def interp(xs, ys, x):
    for i in range(len(xs) - 1):
        if xs[i] <= x <= xs[i + 1]:
            t = (x - xs[i]) / (xs[i + 1] - xs[i])
            return ys[i] + t * (ys[i + 1] - ys[i])
    raise ValueError(x)


def main():
    here = os.path.join(os.path.dirname(os.path.abspath(__file__)), "jerlov")
    os.makedirs(here, exist_ok=True)
    for name, (chl, ag, bp, eta) in TYPES.items():
        lines = [
            f"# Jerlov water type {name}",
            "# Approximate inherent optical properties generated by data/gen_jerlov.py",
            "# (pure water + phytoplankton + CDOM + particles, tuned toward the",
            "# Solonenko & Mobley 2015 Jerlov IOP tables). Units: nm, 1/m, 1/m.",
            f"# parameters: chl={chl} a_g440={ag} b_p550={bp} eta={eta}",
            "# wavelength_nm absorption scattering",
        ]
        for wl in range(400, 701, 10):
            aw = interp(WL, A_WATER, wl)
            aph = 0.06 * chl ** 0.65 * interp(WL, A_PH_SHAPE, wl)
            acdom = ag * math.exp(-0.014 * (wl - 440))
            bw = 0.0029 * (500.0 / wl) ** 4.32
            bpart = bp * (550.0 / wl) ** eta
            lines.append(f"{wl} {aw + aph + acdom:.5f} {bw + bpart:.5f}")
        with open(os.path.join(here, f"{name}.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
