from __future__ import annotations

import sys

from proprio_fusion.cli import main

sys.exit(main())
