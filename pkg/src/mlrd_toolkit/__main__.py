from mlrd_toolkit.app.cli import main

raise SystemExit(main())
