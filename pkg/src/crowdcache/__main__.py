import sys

from crowdcache.experiments.cli import main

sys.exit(main())
