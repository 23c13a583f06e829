"""``python3 -m growthlab``."""

import sys

from .cli import main

sys.exit(main())
