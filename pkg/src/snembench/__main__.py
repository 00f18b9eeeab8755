import sys

from snembench.cli import main

sys.exit(main())
