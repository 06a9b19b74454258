import sys

from ouspec.cli import main

sys.exit(main())
