import sys

from gksm.harness.cli import main

sys.exit(main())
