import sys

from ddsim.cli import main

sys.exit(main())
