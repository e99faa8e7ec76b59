import sys

from fairfrontier.cli import main

sys.exit(main())
