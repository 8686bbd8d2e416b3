import sys

from prenv.cli import main

sys.exit(main())
