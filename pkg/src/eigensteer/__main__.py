import sys

from eigensteer.cli import main

sys.exit(main())
