from todabif.cli import main

raise SystemExit(main())
