#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import sys
from sketchfit.main import main

if __name__ == "__main__":
    sys.exit(main())
