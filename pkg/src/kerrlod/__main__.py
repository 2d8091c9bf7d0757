import sys

from kerrlod.cli import main

sys.exit(main())
