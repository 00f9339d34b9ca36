#!/usr/bin/env python3
"""
Binomial SRM with covariate-dependent dyadic reciprocity.

Usage:
    python srm-reciprocity.py simulate --nodes 20 --seed 7 --output-dir sim
    python srm-reciprocity.py fit --data sim/dataset.csv --output-dir fit
    python srm-reciprocity.py reciprocity --posterior fit/posterior.csv
"""

import sys

from srm_reciprocity.cli import main

if __name__ == "__main__":
    sys.exit(main())
