import sys

from sevae.harness.cli import main

sys.exit(main())
